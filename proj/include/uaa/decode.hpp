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

// Decoding over any speech model. The functions are generic so the same
// search code runs against the reference model, hand-set mock models in
// tests, or an adapter for an external victim.

#include <Eigen/Dense>

#include <algorithm>
#include <concepts>
#include <map>
#include <string>
#include <vector>

#include "uaa/common.hpp"
#include "uaa/types.hpp"

namespace uaa {

// Minimal surface a model must expose to be decodable.
template <typename M>
concept SpeechModel = requires(const M& m, const Waveform& w, const FeatureSequence& f,
                               const Prompt& p, const std::vector<int>& ids) {
    { m.vocab() } -> std::convertible_to<const Vocabulary&>;
    { m.sample_rate() } -> std::convertible_to<int>;
    { m.max_decode_len() } -> std::convertible_to<int>;
    { m.encode(w) } -> std::convertible_to<FeatureSequence>;
    { m.decode_step(f, p, ids) } -> std::convertible_to<Eigen::VectorXd>;
    { m.token_logprobs(f, p, ids) } -> std::convertible_to<std::vector<double>>;
};

// A model the attack optimizer can differentiate through: per-token-mean
// teacher-forced NLL plus its gradient with respect to input samples.
template <typename M>
concept AttackableModel = SpeechModel<M> && requires(const M& m, const Waveform& w,
                                                     const Prompt& p, const std::vector<int>& ids) {
    { m.nll_and_grad(w, p, ids) } -> std::convertible_to<std::pair<double, std::vector<double>>>;
};

namespace detail {
inline int argmax_row(const Eigen::VectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;  // ties resolve to the lowest index
    return best;
}
}  // namespace detail

template <SpeechModel M>
Hypothesis decode_greedy_features(const M& m, const FeatureSequence& features, const Prompt& prompt) {
    const int eot = m.vocab().eot_id();
    Hypothesis hyp;
    std::vector<int> prefix;
    for (int step = 0; step < m.max_decode_len(); ++step) {
        const Eigen::VectorXd lp = m.decode_step(features, prompt, prefix);
        const int tok = detail::argmax_row(lp);
        hyp.score += lp(tok);
        if (tok == eot) {
            hyp.terminated = true;
            break;
        }
        prefix.push_back(tok);
    }
    hyp.token_ids = std::move(prefix);
    hyp.text = m.vocab().detokenize(hyp.token_ids);
    return hyp;
}

template <SpeechModel M>
Hypothesis decode_greedy(const M& m, const Waveform& w, const Prompt& prompt) {
    return decode_greedy_features(m, m.encode(w), prompt);
}

// Beam search. Expansions are ranked by raw cumulative log-probability; an
// expansion that emits eot finalizes its hypothesis and releases the slot.
// The returned candidate maximizes score / length^length_penalty with length
// counting the terminating eot (so an immediately-muted output has length 1).
// beam_size 1 reproduces decode_greedy token for token.
template <SpeechModel M>
Hypothesis decode_beam_features(const M& m, const FeatureSequence& features, const Prompt& prompt,
                                int beam_size, double length_penalty) {
    if (beam_size < 1) throw InvalidInputError("decode_beam: beam_size must be >= 1");
    const int eot = m.vocab().eot_id();

    struct Cand {
        std::vector<int> ids;
        double score = 0.0;
    };
    auto norm = [&](const Cand& c, bool finished) {
        const double len = double(c.ids.size()) + (finished ? 1.0 : 0.0);
        return c.score / std::pow(std::max(len, 1.0), length_penalty);
    };

    std::vector<Cand> active{{{}, 0.0}};
    std::vector<Cand> finished;
    for (int step = 0; step < m.max_decode_len() && !active.empty(); ++step) {
        struct Ext {
            int cand;
            int tok;
            double score;
        };
        std::vector<Ext> exts;
        exts.reserve(active.size() * std::size_t(m.vocab().size()));
        for (int c = 0; c < int(active.size()); ++c) {
            const Eigen::VectorXd lp = m.decode_step(features, prompt, active[std::size_t(c)].ids);
            for (int t = 0; t < lp.size(); ++t)
                exts.push_back({c, t, active[std::size_t(c)].score + lp(t)});
        }
        std::stable_sort(exts.begin(), exts.end(), [](const Ext& a, const Ext& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.cand != b.cand) return a.cand < b.cand;
            return a.tok < b.tok;
        });
        std::vector<Cand> next;
        for (const Ext& e : exts) {
            if (int(next.size()) + int(finished.size()) >= beam_size) break;
            Cand c = active[std::size_t(e.cand)];
            c.score = e.score;
            if (e.tok == eot) {
                finished.push_back(std::move(c));
            } else {
                c.ids.push_back(e.tok);
                next.push_back(std::move(c));
            }
        }
        active = std::move(next);
    }

    const Cand* best = nullptr;
    bool best_finished = false;
    double best_norm = 0.0;
    for (const Cand& c : finished)
        if (!best || norm(c, true) > best_norm) best = &c, best_finished = true, best_norm = norm(c, true);
    if (!best)
        for (const Cand& c : active)
            if (!best || norm(c, false) > best_norm) best = &c, best_norm = norm(c, false);
    if (!best) throw NumericalError("decode_beam: no candidate produced");

    Hypothesis hyp;
    hyp.token_ids = best->ids;
    hyp.score = best->score;
    hyp.terminated = best_finished;
    hyp.text = m.vocab().detokenize(hyp.token_ids);
    return hyp;
}

template <SpeechModel M>
Hypothesis decode_beam(const M& m, const Waveform& w, const Prompt& prompt, int beam_size,
                       double length_penalty) {
    return decode_beam_features(m, m.encode(w), prompt, beam_size, length_penalty);
}

struct DecodeSettings {
    std::string mode = "greedy";  // "greedy" or "beam"
    int beam_size = 5;
    double length_penalty = 1.0;
};

template <SpeechModel M>
Hypothesis decode_with(const M& m, const FeatureSequence& features, const Prompt& prompt,
                       const DecodeSettings& s) {
    if (s.mode == "greedy") return decode_greedy_features(m, features, prompt);
    if (s.mode == "beam") return decode_beam_features(m, features, prompt, s.beam_size, s.length_penalty);
    throw ConfigError("unknown decode mode '" + s.mode + "'");
}

// First-token probabilities renormalized over the class tokens.
template <SpeechModel M>
std::map<std::string, double> classify_attribute(const M& m, const Waveform& w, const Prompt& prompt,
                                                 const std::map<std::string, int>& class_tokens) {
    if (class_tokens.empty()) throw InvalidInputError("classify_attribute: no class tokens");
    {
        std::vector<int> ids;
        for (const auto& [_, id] : class_tokens) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw InvalidInputError("classify_attribute: duplicate token ids");
    }
    const Eigen::VectorXd lp = m.decode_step(m.encode(w), prompt, {});
    std::map<std::string, double> probs;
    double total = 0.0;
    for (const auto& [label, id] : class_tokens) {
        const double p = std::exp(lp(id));
        probs[label] = p;
        total += p;
    }
    if (total <= 0.0) throw NumericalError("classify_attribute: zero total probability");
    for (auto& [_, p] : probs) p /= total;
    return probs;
}

// Gradient of the teacher-forced NLL with respect to the samples inside
// [region_offset, region_offset + region_len). A zero-length region yields
// an empty gradient.
template <AttackableModel M>
std::vector<double> input_gradient(const M& m, std::size_t region_offset, std::size_t region_len,
                                   const Waveform& w, const Prompt& prompt,
                                   const std::vector<int>& targets) {
    if (region_offset + region_len > w.samples.size())
        throw InvalidInputError("input_gradient: region out of bounds");
    if (region_len == 0) return {};
    auto [loss, grad] = m.nll_and_grad(w, prompt, targets);
    (void)loss;
    return std::vector<double>(grad.begin() + long(region_offset),
                               grad.begin() + long(region_offset + region_len));
}

}  // namespace uaa
