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

// Reference speech model: a strided-convolution front end over raw samples
// feeding a compact self-attention encoder, plus an autoregressive decoder
// that consumes [<sys>, prompt tokens, <sep>] followed by output tokens.
// Every forward pass, including plain inference, runs on the autodiff tape;
// there is exactly one implementation of the math.
//
// The model is intentionally generic over its scalar type: training can run
// in single precision while all attack-facing gradient work runs in double.

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <string>
#include <utility>
#include <vector>

#include "uaa/autodiff.hpp"
#include "uaa/common.hpp"
#include "uaa/types.hpp"

namespace uaa::model {

// ----------------------------------------------------------------------------
// Configuration and vocabulary
// ----------------------------------------------------------------------------

struct ModelConfig {
    int sample_rate = 16000;
    int conv1_channels = 24;
    int conv1_kernel = 128;
    int conv1_stride = 16;
    int conv2_kernel = 40;
    int conv2_stride = 20;  // conv2 emits d_model channels
    int d_model = 32;
    int n_heads = 4;
    int ffn_mult = 4;
    int enc_layers = 2;
    int dec_layers = 2;
    int max_decode_len = 64;
    std::uint64_t seed = 7;
    Vocabulary vocab;

    int downsample_factor() const { return conv1_stride * conv2_stride; }

    void validate() const {
        if (sample_rate <= 0) throw ConfigError("model: sample_rate must be positive");
        for (int v : {conv1_channels, conv1_kernel, conv1_stride, conv2_kernel, conv2_stride,
                      d_model, n_heads, ffn_mult, enc_layers, dec_layers})
            if (v <= 0) throw ConfigError("model: all dimensions must be positive");
        if (max_decode_len < 1) throw ConfigError("model: max_decode_len must be >= 1");
        if (d_model % n_heads != 0) throw ConfigError("model: d_model must divide into heads");
        if (conv1_kernel < conv1_stride || conv2_kernel < conv2_stride)
            throw ConfigError("model: conv kernel must cover its stride");
        if (vocab.size() < 4) throw ConfigError("model: vocabulary too small");
    }
};

// Token inventory shared by the bundled corpus and the reference model:
// specials, prompt-task tokens, gender answers, then the two language
// inventories.
inline Vocabulary default_vocabulary() {
    std::vector<std::string> toks = {"<pad>", "<eot>", "<sys>", "<sep>", "<asr>",
                                     "<st>",  "<gdr>", "m",     "f"};
    for (char lang : {'a', 'b'})
        for (int i = 0; i < 16; ++i) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "%c%02d", lang, i);
            toks.emplace_back(buf);
        }
    return Vocabulary(std::move(toks), /*pad=*/0, /*eot=*/1, /*sys=*/2, /*sep=*/3);
}

inline std::vector<Prompt> default_prompts(const Vocabulary& v) {
    return {
        {"asr", {v.id("<asr>")}, "transcribe the speech"},
        {"st", {v.id("<st>")}, "translate the speech into the other language"},
        {"gdr", {v.id("<gdr>")}, "detect the gender of the speaker"},
    };
}

inline const Prompt& find_prompt(const std::vector<Prompt>& catalogue, const std::string& name) {
    for (const Prompt& p : catalogue)
        if (p.name == name) return p;
    throw InvalidInputError("unknown prompt '" + name + "'");
}

// ----------------------------------------------------------------------------
// Named parameter store
// ----------------------------------------------------------------------------

template <typename T>
struct Params {
    std::vector<std::pair<std::string, ad::Mat<T>>> tensors;

    int index(const std::string& name) const {
        for (int i = 0; i < int(tensors.size()); ++i)
            if (tensors[std::size_t(i)].first == name) return i;
        throw InvalidInputError("unknown parameter '" + name + "'");
    }
    ad::Mat<T>& at(const std::string& name) { return tensors[std::size_t(index(name))].second; }
    const ad::Mat<T>& at(const std::string& name) const {
        return tensors[std::size_t(index(name))].second;
    }

    std::size_t count_scalars() const {
        std::size_t n = 0;
        for (const auto& [_, m] : tensors) n += std::size_t(m.size());
        return n;
    }

    std::string checksum() const {
        Fnv1a f;
        for (const auto& [name, m] : tensors) {
            f.update(name.data(), name.size());
            f.update(m.data(), std::size_t(m.size()) * sizeof(T));
        }
        return f.hex();
    }
};

namespace detail {

template <typename T>
ad::Mat<T> sinusoidal_positions(int length, int dim) {
    ad::Mat<T> pe(length, dim);
    for (int p = 0; p < length; ++p)
        for (int i = 0; i < dim; ++i) {
            const double rate = std::pow(10000.0, -double(i / 2 * 2) / dim);
            const double a = p * rate;
            pe(p, i) = T(i % 2 == 0 ? std::sin(a) : std::cos(a));
        }
    return pe;
}

template <typename T>
ad::Mat<T> causal_mask(int n) {
    ad::Mat<T> m = ad::Mat<T>::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m(i, j) = T(-1e9);
    return m;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// RefModel
// ----------------------------------------------------------------------------

template <typename T = double>
class RefModel {
public:
    using Mat = ad::Mat<T>;

    explicit RefModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        init_params();
    }

    RefModel(ModelConfig cfg, Params<T> params) : cfg_(std::move(cfg)), params_(std::move(params)) {
        cfg_.validate();
    }

    const ModelConfig& config() const { return cfg_; }
    const Vocabulary& vocab() const { return cfg_.vocab; }
    int sample_rate() const { return cfg_.sample_rate; }
    int max_decode_len() const { return cfg_.max_decode_len; }
    const Params<T>& params() const { return params_; }
    Params<T>& params_mut() { return params_; }
    std::string params_checksum() const { return params_.checksum(); }

    // --- per-pass parameter registration -------------------------------------

    // Registers parameter tensors as graph leaves on demand. When train is
    // true the leaves require gradients (training); otherwise parameters are
    // constants and backward skips them entirely (attack passes).
    struct Pass {
        ad::Graph<T>& g;
        const Params<T>& params;
        bool train = false;
        std::vector<ad::Var> vars;

        Pass(ad::Graph<T>& graph, const Params<T>& p, bool train_mode)
            : g(graph), params(p), train(train_mode), vars(p.tensors.size()) {}

        ad::Var operator()(const std::string& name) {
            const int i = params.index(name);
            if (!vars[std::size_t(i)].valid())
                vars[std::size_t(i)] = g.leaf(params.tensors[std::size_t(i)].second, train);
            return vars[std::size_t(i)];
        }
    };

    // --- graph builders -------------------------------------------------------

    // waveform must already be an (N x 1) leaf/constant in g
    ad::Var build_encoder(ad::Graph<T>& g, Pass& P, ad::Var samples) const {
        ad::Var h = g.conv1d(samples, P("front.conv1.w"), P("front.conv1.b"), cfg_.conv1_kernel,
                             cfg_.conv1_stride);
        h = g.gelu(h);
        h = g.conv1d(h, P("front.conv2.w"), P("front.conv2.b"), cfg_.conv2_kernel, cfg_.conv2_stride);
        h = g.gelu(h);
        h = g.layernorm_rows(h, P("front.ln.g"), P("front.ln.b"));
        h = g.add_const(h, detail::sinusoidal_positions<T>(int(g.val(h).rows()), cfg_.d_model));
        for (int l = 0; l < cfg_.enc_layers; ++l) {
            const std::string pre = "enc." + std::to_string(l) + ".";
            ad::Var x = g.layernorm_rows(h, P(pre + "ln1.g"), P(pre + "ln1.b"));
            h = g.add(h, attention(g, P, x, x, pre + "attn.", /*causal=*/false));
            ad::Var y = g.layernorm_rows(h, P(pre + "ln2.g"), P(pre + "ln2.b"));
            h = g.add(h, ffn(g, P, y, pre + "ffn."));
        }
        return g.layernorm_rows(h, P("enc.ln_out.g"), P("enc.ln_out.b"));
    }

    // Returns the (len x V) matrix of next-token log-probabilities for the
    // decoder input [sys, prompt, sep, y_prefix...]. Row (|prompt|+1+t)
    // predicts output token t.
    ad::Var build_decoder(ad::Graph<T>& g, Pass& P, ad::Var memory, const Prompt& prompt,
                          const std::vector<int>& y_prefix) const {
        prompt.validate();
        std::vector<int> ids;
        ids.reserve(2 + prompt.token_ids.size() + y_prefix.size());
        ids.push_back(cfg_.vocab.sys_id());
        for (int t : prompt.token_ids) ids.push_back(check_id(t));
        ids.push_back(cfg_.vocab.sep_id());
        for (int t : y_prefix) ids.push_back(check_id(t));

        ad::Var h = g.embed(P("dec.embed"), ids);
        h = g.add_const(h, detail::sinusoidal_positions<T>(int(ids.size()), cfg_.d_model));
        const ad::Mat<T> mask = detail::causal_mask<T>(int(ids.size()));
        for (int l = 0; l < cfg_.dec_layers; ++l) {
            const std::string pre = "dec." + std::to_string(l) + ".";
            ad::Var x = g.layernorm_rows(h, P(pre + "ln1.g"), P(pre + "ln1.b"));
            h = g.add(h, attention(g, P, x, x, pre + "self.", true, &mask));
            ad::Var c = g.layernorm_rows(h, P(pre + "ln2.g"), P(pre + "ln2.b"));
            h = g.add(h, attention(g, P, c, memory, pre + "cross.", false));
            ad::Var y = g.layernorm_rows(h, P(pre + "ln3.g"), P(pre + "ln3.b"));
            h = g.add(h, ffn(g, P, y, pre + "ffn."));
        }
        h = g.layernorm_rows(h, P("dec.ln_out.g"), P("dec.ln_out.b"));
        ad::Var logits = g.add_rowvec(g.matmul(h, P("dec.out.w")), P("dec.out.b"));
        return g.log_softmax_rows(logits);
    }

    // --- public operations ----------------------------------------------------

    FeatureSequence encode(const Waveform& w) const {
        check_waveform(w);
        ad::Graph<T> g;
        Pass P(g, params_, false);
        ad::Var feat = build_encoder(g, P, g.constant(to_col(w.samples)));
        FeatureSequence out;
        out.frames = g.val(feat).template cast<double>();
        out.downsample_factor = cfg_.downsample_factor();
        return out;
    }

    // teacher-forced per-position log P(y_t | y_<t, features, prompt)
    std::vector<double> token_logprobs(const FeatureSequence& features, const Prompt& prompt,
                                       const std::vector<int>& targets) const {
        check_targets(targets);
        ad::Graph<T> g;
        Pass P(g, params_, false);
        ad::Var mem = g.constant(features.frames.template cast<T>());
        std::vector<int> prefix(targets.begin(), targets.end() - 1);
        ad::Var lp = build_decoder(g, P, mem, prompt, prefix);
        const int p0 = int(prompt.token_ids.size()) + 1;
        std::vector<double> out(targets.size());
        for (std::size_t t = 0; t < targets.size(); ++t)
            out[t] = double(g.val(lp)(p0 + int(t), targets[t]));
        return out;
    }

    // full next-token log-probability row given an output prefix
    Eigen::VectorXd decode_step(const FeatureSequence& features, const Prompt& prompt,
                                const std::vector<int>& prefix) const {
        ad::Graph<T> g;
        Pass P(g, params_, false);
        ad::Var mem = g.constant(features.frames.template cast<T>());
        ad::Var lp = build_decoder(g, P, mem, prompt, prefix);
        return g.val(lp).row(g.val(lp).rows() - 1).template cast<double>().transpose();
    }

    // Per-token-mean teacher-forced NLL of `targets` and its gradient with
    // respect to every input sample. The single gradient primitive behind
    // all attack objectives; parameters stay frozen by construction.
    std::pair<double, std::vector<double>> nll_and_grad(const Waveform& w, const Prompt& prompt,
                                                        const std::vector<int>& targets) const {
        check_waveform(w);
        check_targets(targets);
        ad::Graph<T> g;
        Pass P(g, params_, false);
        ad::Var samples = g.leaf(to_col(w.samples), /*requires_grad=*/true);
        ad::Var mem = build_encoder(g, P, samples);
        std::vector<int> prefix(targets.begin(), targets.end() - 1);
        ad::Var lp = build_decoder(g, P, mem, prompt, prefix);
        const int p0 = int(prompt.token_ids.size()) + 1;
        ad::Var picked = g.rows(lp, p0, int(targets.size()));
        ad::Var loss = g.nll_mean(picked, targets);
        const double loss_v = double(g.val(loss)(0, 0));
        if (!std::isfinite(loss_v)) throw NumericalError("nll_and_grad: non-finite loss");
        g.backward(loss);
        const ad::Mat<T>& gr = g.grad(samples);
        std::vector<double> grad(w.samples.size());
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = double(gr(int(i), 0));
        return {loss_v, std::move(grad)};
    }

    // teacher-forced loss without gradient (cheaper logging path)
    double nll(const FeatureSequence& features, const Prompt& prompt,
               const std::vector<int>& targets) const {
        const auto lp = token_logprobs(features, prompt, targets);
        double s = 0.0;
        for (double v : lp) s -= v;
        return s / double(lp.size());
    }

    // d features(frame_i, frame_j) / d samples — the encoder Jacobian row
    // used by the finite-difference harness.
    std::vector<double> encode_input_gradient(const Waveform& w, int frame_i, int frame_j) const {
        check_waveform(w);
        ad::Graph<T> g;
        Pass P(g, params_, false);
        ad::Var samples = g.leaf(to_col(w.samples), true);
        ad::Var feat = build_encoder(g, P, samples);
        ad::Var entry = g.cols(g.rows(feat, frame_i, 1), frame_j, 1);
        g.backward(entry);
        const ad::Mat<T>& gr = g.grad(samples);
        std::vector<double> grad(w.samples.size());
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = double(gr(int(i), 0));
        return grad;
    }

private:
    ad::Var attention(ad::Graph<T>& g, Pass& P, ad::Var q_src, ad::Var kv_src,
                      const std::string& pre, bool causal, const ad::Mat<T>* mask = nullptr) const {
        const int dh = cfg_.d_model / cfg_.n_heads;
        ad::Var q = g.add_rowvec(g.matmul(q_src, P(pre + "wq")), P(pre + "bq"));
        ad::Var k = g.add_rowvec(g.matmul(kv_src, P(pre + "wk")), P(pre + "bk"));
        ad::Var v = g.add_rowvec(g.matmul(kv_src, P(pre + "wv")), P(pre + "bv"));
        std::vector<ad::Var> heads;
        heads.reserve(std::size_t(cfg_.n_heads));
        for (int h = 0; h < cfg_.n_heads; ++h) {
            ad::Var qh = g.cols(q, h * dh, dh);
            ad::Var kh = g.cols(k, h * dh, dh);
            ad::Var vh = g.cols(v, h * dh, dh);
            ad::Var scores = g.scale(g.matmul(qh, g.transpose(kh)), T(1) / T(std::sqrt(double(dh))));
            if (causal && mask) scores = g.add_const(scores, *mask);
            heads.push_back(g.matmul(g.softmax_rows(scores), vh));
        }
        ad::Var cat = g.hcat(heads);
        return g.add_rowvec(g.matmul(cat, P(pre + "wo")), P(pre + "bo"));
    }

    ad::Var ffn(ad::Graph<T>& g, Pass& P, ad::Var x, const std::string& pre) const {
        ad::Var h = g.gelu(g.add_rowvec(g.matmul(x, P(pre + "w1")), P(pre + "b1")));
        return g.add_rowvec(g.matmul(h, P(pre + "w2")), P(pre + "b2"));
    }

    static ad::Mat<T> to_col(const std::vector<double>& v) {
        ad::Mat<T> m(int(v.size()), 1);
        for (std::size_t i = 0; i < v.size(); ++i) m(int(i), 0) = T(v[i]);
        return m;
    }

    int check_id(int t) const {
        if (t < 0 || t >= cfg_.vocab.size())
            throw InvalidInputError("token id " + std::to_string(t) + " out of vocabulary");
        return t;
    }

    void check_waveform(const Waveform& w) const {
        if (w.sample_rate != cfg_.sample_rate)
            throw ConfigError("waveform sample rate " + std::to_string(w.sample_rate) +
                              " does not match model rate " + std::to_string(cfg_.sample_rate));
        if (w.samples.empty()) throw InvalidInputError("empty waveform");
        w.validate();
    }

    void check_targets(const std::vector<int>& targets) const {
        if (targets.empty() || targets.back() != cfg_.vocab.eot_id())
            throw InvalidInputError("targets must be nonempty and end with eot");
        for (int t : targets) check_id(t);
    }

    void init_params() {
        Rng rng(derive_seed(cfg_.seed, 0x0d));
        auto add = [&](const std::string& name, int rows, int cols, double stddev) {
            ad::Mat<T> m(rows, cols);
            for (int c = 0; c < cols; ++c)
                for (int r = 0; r < rows; ++r) m(r, c) = T(stddev * rng.normal());
            params_.tensors.emplace_back(name, std::move(m));
        };
        auto add_zeros = [&](const std::string& name, int rows, int cols) {
            params_.tensors.emplace_back(name, ad::Mat<T>::Zero(rows, cols));
        };
        auto add_ones = [&](const std::string& name, int rows, int cols) {
            params_.tensors.emplace_back(name, ad::Mat<T>::Ones(rows, cols));
        };
        auto add_ln = [&](const std::string& pre) {
            add_ones(pre + "g", 1, cfg_.d_model);
            add_zeros(pre + "b", 1, cfg_.d_model);
        };
        auto add_attn = [&](const std::string& pre) {
            for (const char* n : {"wq", "wk", "wv", "wo"})
                add(pre + n, cfg_.d_model, cfg_.d_model, 1.0 / std::sqrt(double(cfg_.d_model)));
            for (const char* n : {"bq", "bk", "bv", "bo"}) add_zeros(pre + n, 1, cfg_.d_model);
        };
        auto add_ffn = [&](const std::string& pre) {
            const int d = cfg_.d_model, f = cfg_.ffn_mult * cfg_.d_model;
            add(pre + "w1", d, f, 1.0 / std::sqrt(double(d)));
            add_zeros(pre + "b1", 1, f);
            add(pre + "w2", f, d, 1.0 / std::sqrt(double(f)));
            add_zeros(pre + "b2", 1, d);
        };

        const int d = cfg_.d_model;
        add("front.conv1.w", cfg_.conv1_kernel, cfg_.conv1_channels,
            1.0 / std::sqrt(double(cfg_.conv1_kernel)));
        add_zeros("front.conv1.b", 1, cfg_.conv1_channels);
        add("front.conv2.w", cfg_.conv2_kernel * cfg_.conv1_channels, d,
            1.0 / std::sqrt(double(cfg_.conv2_kernel * cfg_.conv1_channels)));
        add_zeros("front.conv2.b", 1, d);
        add_ln("front.ln.");
        for (int l = 0; l < cfg_.enc_layers; ++l) {
            const std::string pre = "enc." + std::to_string(l) + ".";
            add_ln(pre + "ln1.");
            add_attn(pre + "attn.");
            add_ln(pre + "ln2.");
            add_ffn(pre + "ffn.");
        }
        add_ln("enc.ln_out.");
        add("dec.embed", cfg_.vocab.size(), d, 0.05);
        for (int l = 0; l < cfg_.dec_layers; ++l) {
            const std::string pre = "dec." + std::to_string(l) + ".";
            add_ln(pre + "ln1.");
            add_attn(pre + "self.");
            add_ln(pre + "ln2.");
            add_attn(pre + "cross.");
            add_ln(pre + "ln3.");
            add_ffn(pre + "ffn.");
        }
        add_ln("dec.ln_out.");
        add("dec.out.w", d, cfg_.vocab.size(), 1.0 / std::sqrt(double(d)));
        add_zeros("dec.out.b", 1, cfg_.vocab.size());
    }

    ModelConfig cfg_;
    Params<T> params_;
};

}  // namespace uaa::model
