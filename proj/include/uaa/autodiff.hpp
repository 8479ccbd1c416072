// Copyright 2026 The uaa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Tape-based reverse-mode automatic differentiation over dense matrices.
//
// Each forward pass builds a fresh Graph; nodes are appended in evaluation
// order, so the tape is already a topological order and backward() is a
// single reverse sweep. Ops are matrix-level (matmul, softmax, conv1d, ...)
// which keeps the tape short — a full encoder/decoder pass is a few hundred
// nodes — and leaves all the heavy lifting to Eigen.
//
// Gradients are only propagated along paths that reach a requires-grad leaf.
// An attack pass therefore never computes parameter gradients, and a
// training pass never differentiates with respect to the waveform.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

#include "uaa/common.hpp"

namespace uaa::ad {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct Var {
    int i = -1;
    bool valid() const { return i >= 0; }
};

template <typename T>
class Graph {
public:
    Graph() { nodes_.reserve(256); }

    // --- leaves -------------------------------------------------------------

    Var leaf(Mat<T> value, bool requires_grad) {
        Node n;
        n.val = std::move(value);
        n.req = requires_grad;
        nodes_.push_back(std::move(n));
        return {int(nodes_.size()) - 1};
    }

    Var constant(Mat<T> value) { return leaf(std::move(value), false); }

    // --- access -------------------------------------------------------------

    const Mat<T>& val(Var v) const { return nodes_[v.i].val; }
    const Mat<T>& grad(Var v) const { return nodes_[v.i].grad; }
    bool requires_grad(Var v) const { return nodes_[v.i].req; }

    // --- ops ----------------------------------------------------------------

    Var matmul(Var a, Var b) {
        Var out = make(nodes_[a.i].val * nodes_[b.i].val, {a, b});
        if (nodes_[out.i].req)
            set_back(out, [this, a, b, out]() {
                const Mat<T>& g = nodes_[out.i].grad;
                if (nodes_[a.i].req) acc(a, g * nodes_[b.i].val.transpose());
                if (nodes_[b.i].req) acc(b, nodes_[a.i].val.transpose() * g);
            });
        return out;
    }

    Var add(Var a, Var b) {
        Var out = make(nodes_[a.i].val + nodes_[b.i].val, {a, b});
        if (nodes_[out.i].req)
            set_back(out, [this, a, b, out]() {
                const Mat<T>& g = nodes_[out.i].grad;
                if (nodes_[a.i].req) acc(a, g);
                if (nodes_[b.i].req) acc(b, g);
            });
        return out;
    }

    // broadcast a 1xD row vector over every row of a
    Var add_rowvec(Var a, Var r) {
        Mat<T> v = nodes_[a.i].val;
        v.rowwise() += nodes_[r.i].val.row(0);
        Var out = make(std::move(v), {a, r});
        if (nodes_[out.i].req)
            set_back(out, [this, a, r, out]() {
                const Mat<T>& g = nodes_[out.i].grad;
                if (nodes_[a.i].req) acc(a, g);
                if (nodes_[r.i].req) acc(r, g.colwise().sum());
            });
        return out;
    }

    Var add_const(Var a, const Mat<T>& m) {
        Var out = make(nodes_[a.i].val + m, {a});
        if (nodes_[out.i].req)
            set_back(out, [this, a, out]() { acc(a, nodes_[out.i].grad); });
        return out;
    }

    Var scale(Var a, T s) {
        Var out = make(nodes_[a.i].val * s, {a});
        if (nodes_[out.i].req)
            set_back(out, [this, a, s, out]() { acc(a, (nodes_[out.i].grad * s).eval()); });
        return out;
    }

    // exact GELU: x * Phi(x)
    Var gelu(Var a) {
        const Mat<T>& x = nodes_[a.i].val;
        Mat<T> y = x.unaryExpr([](T v) {
            return T(0.5) * v * (T(1) + T(std::erf(double(v) * 0.7071067811865476)));
        });
        Var out = make(std::move(y), {a});
        if (nodes_[out.i].req)
            set_back(out, [this, a, out]() {
                const Mat<T>& x = nodes_[a.i].val;
                const Mat<T>& g = nodes_[out.i].grad;
                Mat<T> d = x.unaryExpr([](T v) {
                    const double vd = double(v);
                    const double phi = 0.5 * (1.0 + std::erf(vd * 0.7071067811865476));
                    const double pdf = std::exp(-0.5 * vd * vd) * 0.3989422804014327;
                    return T(phi + vd * pdf);
                });
                acc(a, (g.array() * d.array()).matrix());
            });
        return out;
    }

    // row-wise LayerNorm with affine parameters gamma, beta (1xD each)
    Var layernorm_rows(Var x, Var gamma, Var beta, T eps = T(1e-5)) {
        const Mat<T>& xv = nodes_[x.i].val;
        const int R = int(xv.rows()), D = int(xv.cols());
        Mat<T> xhat(R, D);
        Vec<T> inv_sd(R);
        for (int r = 0; r < R; ++r) {
            const T mu = xv.row(r).mean();
            const T var = (xv.row(r).array() - mu).square().sum() / T(D);
            const T is = T(1) / std::sqrt(var + eps);
            inv_sd(r) = is;
            xhat.row(r) = (xv.row(r).array() - mu) * is;
        }
        Mat<T> y = xhat;
        y.array().rowwise() *= nodes_[gamma.i].val.row(0).array();
        y.rowwise() += nodes_[beta.i].val.row(0);
        Var out = make(std::move(y), {x, gamma, beta});
        if (nodes_[out.i].req)
            set_back(out, [this, x, gamma, beta, out, xhat, inv_sd]() {
                const Mat<T>& g = nodes_[out.i].grad;
                const int R = int(g.rows()), D = int(g.cols());
                if (nodes_[gamma.i].req) acc(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
                if (nodes_[beta.i].req) acc(beta, g.colwise().sum());
                if (nodes_[x.i].req) {
                    Mat<T> dx(R, D);
                    const auto gr = nodes_[gamma.i].val.row(0);
                    for (int r = 0; r < R; ++r) {
                        Eigen::Array<T, 1, Eigen::Dynamic> h = g.row(r).array() * gr.array();
                        const T mh = h.mean();
                        const T mhx = (h * xhat.row(r).array()).mean();
                        dx.row(r) = ((h - mh - xhat.row(r).array() * mhx) * inv_sd(r)).matrix();
                    }
                    acc(x, dx);
                }
            });
        return out;
    }

    Var softmax_rows(Var a) {
        const Mat<T>& x = nodes_[a.i].val;
        Mat<T> y(x.rows(), x.cols());
        for (int r = 0; r < x.rows(); ++r) {
            const T mx = x.row(r).maxCoeff();
            Eigen::Array<T, 1, Eigen::Dynamic> e = (x.row(r).array() - mx).exp();
            y.row(r) = (e / e.sum()).matrix();
        }
        Var out = make(std::move(y), {a});
        if (nodes_[out.i].req)
            set_back(out, [this, a, out]() {
                const Mat<T>& s = nodes_[out.i].val;
                const Mat<T>& g = nodes_[out.i].grad;
                Mat<T> dx(s.rows(), s.cols());
                for (int r = 0; r < s.rows(); ++r) {
                    const T dot = g.row(r).dot(s.row(r));
                    dx.row(r) = (s.row(r).array() * (g.row(r).array() - dot)).matrix();
                }
                acc(a, dx);
            });
        return out;
    }

    Var log_softmax_rows(Var a) {
        const Mat<T>& x = nodes_[a.i].val;
        Mat<T> y(x.rows(), x.cols());
        for (int r = 0; r < x.rows(); ++r) {
            const T mx = x.row(r).maxCoeff();
            Eigen::Array<T, 1, Eigen::Dynamic> sh = x.row(r).array() - mx;
            const T lse = std::log(sh.exp().sum());
            y.row(r) = (sh - lse).matrix();
        }
        Var out = make(std::move(y), {a});
        if (nodes_[out.i].req)
            set_back(out, [this, a, out]() {
                const Mat<T>& ls = nodes_[out.i].val;
                const Mat<T>& g = nodes_[out.i].grad;
                Mat<T> dx(ls.rows(), ls.cols());
                for (int r = 0; r < ls.rows(); ++r) {
                    const T gsum = g.row(r).sum();
                    dx.row(r) = (g.row(r).array() - ls.row(r).array().exp() * gsum).matrix();
                }
                acc(a, dx);
            });
        return out;
    }

    Var rows(Var a, int r0, int n) {
        Var out = make(nodes_[a.i].val.middleRows(r0, n), {a});
        if (nodes_[out.i].req)
            set_back(out, [this, a, r0, n, out]() {
                ensure_grad(a);
                nodes_[a.i].grad.middleRows(r0, n) += nodes_[out.i].grad;
            });
        return out;
    }

    Var cols(Var a, int c0, int n) {
        Var out = make(nodes_[a.i].val.middleCols(c0, n), {a});
        if (nodes_[out.i].req)
            set_back(out, [this, a, c0, n, out]() {
                ensure_grad(a);
                nodes_[a.i].grad.middleCols(c0, n) += nodes_[out.i].grad;
            });
        return out;
    }

    Var vcat(Var a, Var b) {
        const Mat<T>& av = nodes_[a.i].val;
        const Mat<T>& bv = nodes_[b.i].val;
        Mat<T> v(av.rows() + bv.rows(), av.cols());
        v << av, bv;
        Var out = make(std::move(v), {a, b});
        if (nodes_[out.i].req)
            set_back(out, [this, a, b, out]() {
                const Mat<T>& g = nodes_[out.i].grad;
                const int ra = int(nodes_[a.i].val.rows());
                if (nodes_[a.i].req) acc(a, g.topRows(ra));
                if (nodes_[b.i].req) acc(b, g.bottomRows(g.rows() - ra));
            });
        return out;
    }

    Var hcat(const std::vector<Var>& parts) {
        int cols_total = 0;
        for (Var p : parts) cols_total += int(nodes_[p.i].val.cols());
        Mat<T> v(nodes_[parts[0].i].val.rows(), cols_total);
        int c = 0;
        for (Var p : parts) {
            const int w = int(nodes_[p.i].val.cols());
            v.middleCols(c, w) = nodes_[p.i].val;
            c += w;
        }
        Var out = make(std::move(v), parts);
        if (nodes_[out.i].req)
            set_back(out, [this, parts, out]() {
                const Mat<T>& g = nodes_[out.i].grad;
                int c = 0;
                for (Var p : parts) {
                    const int w = int(nodes_[p.i].val.cols());
                    if (nodes_[p.i].req) acc(p, g.middleCols(c, w));
                    c += w;
                }
            });
        return out;
    }

    Var transpose(Var a) {
        Var out = make(nodes_[a.i].val.transpose(), {a});
        if (nodes_[out.i].req)
            set_back(out, [this, a, out]() { acc(a, nodes_[out.i].grad.transpose()); });
        return out;
    }

    // 1-D convolution with "ceil" zero padding so that L_out = ceil(L_in/stride).
    // x: (L_in x C_in), w: (K*C_in x C_out) with taps laid out k-major, b: 1 x C_out.
    Var conv1d(Var x, Var w, Var b, int kernel, int stride) {
        const Mat<T>& xv = nodes_[x.i].val;
        const int L_in = int(xv.rows()), C_in = int(xv.cols());
        const int C_out = int(nodes_[w.i].val.cols());
        const int L_out = (L_in + stride - 1) / stride;
        const int pad_total = std::max(0, (L_out - 1) * stride + kernel - L_in);
        const int pad_left = pad_total / 2;

        Mat<T> col = Mat<T>::Zero(L_out, kernel * C_in);
        for (int i = 0; i < L_out; ++i) {
            const int start = i * stride - pad_left;
            for (int k = 0; k < kernel; ++k) {
                const int p = start + k;
                if (p >= 0 && p < L_in) col.row(i).segment(k * C_in, C_in) = xv.row(p);
            }
        }
        Mat<T> y = col * nodes_[w.i].val;
        y.rowwise() += nodes_[b.i].val.row(0);
        Var out = make(std::move(y), {x, w, b});
        if (nodes_[out.i].req)
            set_back(out, [this, x, w, b, out, col = std::move(col), kernel, stride, pad_left, L_in, C_in]() {
                const Mat<T>& g = nodes_[out.i].grad;
                if (nodes_[w.i].req) acc(w, col.transpose() * g);
                if (nodes_[b.i].req) acc(b, g.colwise().sum());
                if (nodes_[x.i].req) {
                    Mat<T> dcol = g * nodes_[w.i].val.transpose();  // L_out x K*C_in
                    ensure_grad(x);
                    Mat<T>& dx = nodes_[x.i].grad;
                    for (int i = 0; i < int(dcol.rows()); ++i) {
                        const int start = i * stride - pad_left;
                        for (int k = 0; k < kernel; ++k) {
                            const int p = start + k;
                            if (p >= 0 && p < L_in) dx.row(p) += dcol.row(i).segment(k * C_in, C_in);
                        }
                    }
                }
            });
        return out;
    }

    // gather rows of an embedding table by token id
    Var embed(Var table, std::vector<int> ids) {
        const Mat<T>& tv = nodes_[table.i].val;
        Mat<T> y(int(ids.size()), tv.cols());
        for (int i = 0; i < int(ids.size()); ++i) y.row(i) = tv.row(ids[std::size_t(i)]);
        Var out = make(std::move(y), {table});
        if (nodes_[out.i].req)
            set_back(out, [this, table, out, ids = std::move(ids)]() {
                ensure_grad(table);
                const Mat<T>& g = nodes_[out.i].grad;
                for (int i = 0; i < int(ids.size()); ++i)
                    nodes_[table.i].grad.row(ids[std::size_t(i)]) += g.row(i);
            });
        return out;
    }

    // scalar node: -(1/n) * sum_i logprobs(i, ids[i])
    Var nll_mean(Var logprobs, std::vector<int> ids) {
        const Mat<T>& lp = nodes_[logprobs.i].val;
        T s = T(0);
        for (int i = 0; i < int(ids.size()); ++i) s -= lp(i, ids[std::size_t(i)]);
        Mat<T> v(1, 1);
        v(0, 0) = s / T(ids.size());
        Var out = make(std::move(v), {logprobs});
        if (nodes_[out.i].req)
            set_back(out, [this, logprobs, out, ids = std::move(ids)]() {
                const T g = nodes_[out.i].grad(0, 0) / T(ids.size());
                ensure_grad(logprobs);
                for (int i = 0; i < int(ids.size()); ++i)
                    nodes_[logprobs.i].grad(i, ids[std::size_t(i)]) -= g;
            });
        return out;
    }

    // --- backward -----------------------------------------------------------

    void backward(Var loss) {
        if (nodes_[loss.i].val.size() != 1)
            throw InvalidInputError("backward: loss must be scalar");
        ensure_grad(loss);
        nodes_[loss.i].grad(0, 0) = T(1);
        for (int i = loss.i; i >= 0; --i) {
            Node& n = nodes_[std::size_t(i)];
            if (n.back && n.grad.size() != 0) n.back();
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat<T> val;
        Mat<T> grad;  // empty until touched
        bool req = false;
        std::function<void()> back;
    };

    Var make(Mat<T> v, const std::vector<Var>& parents) {
        if (!v.allFinite()) throw NumericalError("non-finite value in forward pass");
        Node n;
        n.val = std::move(v);
        for (Var p : parents)
            if (nodes_[p.i].req) n.req = true;
        nodes_.push_back(std::move(n));
        return {int(nodes_.size()) - 1};
    }

    void set_back(Var v, std::function<void()> f) { nodes_[v.i].back = std::move(f); }

    void ensure_grad(Var v) {
        Node& n = nodes_[v.i];
        if (n.grad.size() == 0) n.grad = Mat<T>::Zero(n.val.rows(), n.val.cols());
    }

    template <typename Expr>
    void acc(Var v, const Expr& g) {
        ensure_grad(v);
        nodes_[v.i].grad += g;
    }

    std::vector<Node> nodes_;
};

}  // namespace uaa::ad
