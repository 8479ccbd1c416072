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

#include <Eigen/Dense>

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "uaa/common.hpp"

namespace uaa {

// A mono audio signal. Samples are nominally in [-1, 1]; adversarial
// prepends may exceed that range when unconstrained.
struct Waveform {
    std::vector<double> samples;
    int sample_rate = 16000;

    double seconds() const {
        return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0;
    }
    void validate() const {
        if (sample_rate <= 0) throw ConfigError("waveform: sample_rate must be positive");
        if (!all_finite(samples)) throw InvalidInputError("waveform: non-finite sample");
    }
};

// Concatenate b after a. Both signals are preserved bit-exactly.
inline Waveform concat(const Waveform& a, const Waveform& b) {
    if (a.sample_rate != b.sample_rate)
        throw ConfigError("concat: sample rate mismatch");
    Waveform out;
    out.sample_rate = a.sample_rate;
    out.samples.reserve(a.samples.size() + b.samples.size());
    out.samples.insert(out.samples.end(), a.samples.begin(), a.samples.end());
    out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
    return out;
}

// ----------------------------------------------------------------------------
// Vocabulary
// ----------------------------------------------------------------------------

class Vocabulary {
public:
    Vocabulary() = default;

    Vocabulary(std::vector<std::string> tokens, int pad_id, int eot_id, int sys_id, int sep_id)
        : tokens_(std::move(tokens)), pad_id_(pad_id), eot_id_(eot_id), sys_id_(sys_id), sep_id_(sep_id) {
        for (int i = 0; i < int(tokens_.size()); ++i) {
            if (!index_.emplace(tokens_[std::size_t(i)], i).second)
                throw ConfigError("vocabulary: duplicate token '" + tokens_[std::size_t(i)] + "'");
        }
        for (int id : {pad_id_, eot_id_, sys_id_, sep_id_})
            if (id < 0 || id >= int(tokens_.size()))
                throw ConfigError("vocabulary: special id out of range");
    }

    int size() const { return int(tokens_.size()); }
    int pad_id() const { return pad_id_; }
    int eot_id() const { return eot_id_; }
    int sys_id() const { return sys_id_; }
    int sep_id() const { return sep_id_; }

    bool contains(const std::string& tok) const { return index_.count(tok) != 0; }

    int id(const std::string& tok) const {
        auto it = index_.find(tok);
        if (it == index_.end()) throw InvalidInputError("vocabulary: unknown token '" + tok + "'");
        return it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || id >= size()) throw InvalidInputError("vocabulary: id out of range");
        return tokens_[std::size_t(id)];
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

    // whitespace-split tokenization; every word must be in the vocabulary
    std::vector<int> tokenize(const std::string& text) const {
        std::vector<int> ids;
        for (const std::string& w : split_ws(text)) ids.push_back(id(w));
        return ids;
    }

    // inverse of tokenize for canonical (single-space) transcripts
    std::string detokenize(const std::vector<int>& ids) const {
        std::vector<std::string> words;
        words.reserve(ids.size());
        for (int i : ids) words.push_back(token(i));
        return join(words, " ");
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int pad_id_ = 0, eot_id_ = 0, sys_id_ = 0, sep_id_ = 0;
};

// A named task instruction, resolved to decoder token ids.
struct Prompt {
    std::string name;
    std::vector<int> token_ids;
    std::string text;

    void validate() const {
        if (token_ids.empty()) throw InvalidInputError("prompt '" + name + "': empty token_ids");
    }
};

// Encoder output: T' frames of D-dimensional features.
struct FeatureSequence {
    Eigen::MatrixXd frames;  // T' x D
    int downsample_factor = 1;
};

// A decoded output. token_ids excludes the terminating eot.
struct Hypothesis {
    std::vector<int> token_ids;
    std::string text;
    double score = 0.0;  // total log-probability, <= 0
    bool terminated = false;
};

// One corpus element: audio, reference transcript, attribute labels.
struct Utterance {
    std::string id;
    Waveform waveform;
    std::string transcript;
    std::map<std::string, std::string> attributes;

    double duration_seconds() const { return waveform.seconds(); }
};

}  // namespace uaa
