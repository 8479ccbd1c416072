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

// Attack evaluation metrics: mute rate, average sequence length, WER with an
// insertion/deletion/substitution breakdown, detected-language probability
// and attribute (e.g. gender) classification accuracy.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "uaa/common.hpp"

namespace uaa::metrics {

// ----------------------------------------------------------------------------
// Text normalization
// ----------------------------------------------------------------------------

// Default normalizer: lowercase, punctuation to space, collapse whitespace,
// trim. Deterministic and idempotent. Callers needing a different scheme
// (e.g. an external normalizer port) supply their own Normalizer.
using Normalizer = std::function<std::string(const std::string&)>;

inline std::string normalize_text(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            if (pending_space && !out.empty()) out += ' ';
            pending_space = false;
            out += char(std::tolower(c));
        } else if (std::isspace(c) || std::ispunct(c)) {
            pending_space = true;
        } else {
            // pass non-ASCII bytes through untouched
            if (pending_space && !out.empty()) out += ' ';
            pending_space = false;
            out += char(c);
        }
    }
    return out;
}

// true iff the text is empty once every whitespace character is removed
inline bool is_muted(const std::string& text) {
    return std::all_of(text.begin(), text.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

// ----------------------------------------------------------------------------
// Mute rate and average sequence length
// ----------------------------------------------------------------------------

inline double mute_rate(const std::vector<std::string>& hypotheses) {
    if (hypotheses.empty()) throw InvalidInputError("mute_rate: empty hypothesis list");
    std::size_t muted = 0;
    for (const auto& h : hypotheses) muted += is_muted(h) ? 1 : 0;
    return 100.0 * double(muted) / double(hypotheses.size());
}

inline double avg_seq_len(const std::vector<std::string>& hypotheses,
                          const Normalizer& norm = normalize_text) {
    if (hypotheses.empty()) throw InvalidInputError("avg_seq_len: empty hypothesis list");
    std::size_t words = 0;
    for (const auto& h : hypotheses) words += split_ws(norm(h)).size();
    return double(words) / double(hypotheses.size());
}

// ----------------------------------------------------------------------------
// Word error rate
// ----------------------------------------------------------------------------

struct EditCounts {
    int cost = 0;
    int insertions = 0;
    int deletions = 0;
    int substitutions = 0;
};

// Levenshtein alignment with unit costs and a deterministic backtrace
// (match/substitution preferred, then deletion, then insertion).
template <typename T>
EditCounts edit_counts(const std::vector<T>& ref, const std::vector<T>& hyp) {
    const int m = int(ref.size()), n = int(hyp.size());
    std::vector<std::vector<int>> d(std::size_t(m + 1), std::vector<int>(std::size_t(n + 1), 0));
    for (int i = 1; i <= m; ++i) d[std::size_t(i)][0] = i;
    for (int j = 1; j <= n; ++j) d[0][std::size_t(j)] = j;
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= n; ++j) {
            const int sub = d[std::size_t(i - 1)][std::size_t(j - 1)] +
                            (ref[std::size_t(i - 1)] == hyp[std::size_t(j - 1)] ? 0 : 1);
            const int del = d[std::size_t(i - 1)][std::size_t(j)] + 1;
            const int ins = d[std::size_t(i)][std::size_t(j - 1)] + 1;
            d[std::size_t(i)][std::size_t(j)] = std::min({sub, del, ins});
        }
    EditCounts out;
    out.cost = d[std::size_t(m)][std::size_t(n)];
    int i = m, j = n;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0) {
            const int sub_step = (ref[std::size_t(i - 1)] == hyp[std::size_t(j - 1)] ? 0 : 1);
            if (d[std::size_t(i)][std::size_t(j)] ==
                d[std::size_t(i - 1)][std::size_t(j - 1)] + sub_step) {
                out.substitutions += sub_step;
                --i, --j;
                continue;
            }
        }
        if (i > 0 && d[std::size_t(i)][std::size_t(j)] == d[std::size_t(i - 1)][std::size_t(j)] + 1) {
            ++out.deletions;
            --i;
            continue;
        }
        ++out.insertions;
        --j;
    }
    return out;
}

struct WERBreakdown {
    double wer = 0.0;        // percentages of reference words
    double ins_rate = 0.0;
    double del_rate = 0.0;
    double sub_rate = 0.0;
    long ref_words = 0;
    long insertions = 0;
    long deletions = 0;
    long substitutions = 0;
    long excluded = 0;  // pairs dropped because the reference normalized to empty
};

// Corpus-level WER: error counts aggregate over total reference words, not
// per-utterance means. References that normalize to empty are excluded and
// counted.
inline WERBreakdown wer(const std::vector<std::string>& references,
                        const std::vector<std::string>& hypotheses,
                        const Normalizer& norm = normalize_text) {
    if (references.size() != hypotheses.size())
        throw InvalidInputError("wer: reference/hypothesis count mismatch");
    if (references.empty()) throw InvalidInputError("wer: empty input");
    WERBreakdown out;
    for (std::size_t k = 0; k < references.size(); ++k) {
        const auto ref = split_ws(norm(references[k]));
        if (ref.empty()) {
            ++out.excluded;
            continue;
        }
        const auto hyp = split_ws(norm(hypotheses[k]));
        const EditCounts e = edit_counts(ref, hyp);
        out.ref_words += long(ref.size());
        out.insertions += e.insertions;
        out.deletions += e.deletions;
        out.substitutions += e.substitutions;
    }
    if (out.ref_words > 0) {
        const double rw = double(out.ref_words);
        out.ins_rate = 100.0 * double(out.insertions) / rw;
        out.del_rate = 100.0 * double(out.deletions) / rw;
        out.sub_rate = 100.0 * double(out.substitutions) / rw;
        out.wer = 100.0 * double(out.insertions + out.deletions + out.substitutions) / rw;
    }
    return out;
}

// ----------------------------------------------------------------------------
// Detected-language probability
// ----------------------------------------------------------------------------

// Pluggable detector contract: a distribution over configured labels, or
// nullopt when the text cannot be scored.
class LanguageDetector {
public:
    virtual ~LanguageDetector() = default;
    virtual std::vector<std::string> labels() const = 0;
    virtual std::optional<std::map<std::string, double>> detect(const std::string& text) const = 0;
};

// Default desk-scale detector: the fraction of words belonging to each
// language's token inventory. Exact for the bundled corpus; real detectors
// implement the same interface.
class VocabularyDetector : public LanguageDetector {
public:
    VocabularyDetector(std::map<std::string, std::vector<std::string>> inventories,
                       Normalizer norm = normalize_text)
        : norm_(std::move(norm)) {
        for (auto& [label, words] : inventories) {
            labels_.push_back(label);
            sets_[label] = std::unordered_set<std::string>(words.begin(), words.end());
        }
        if (labels_.empty()) throw ConfigError("VocabularyDetector: no labels");
    }

    std::vector<std::string> labels() const override { return labels_; }

    std::optional<std::map<std::string, double>> detect(const std::string& text) const override {
        const auto words = split_ws(norm_(text));
        std::map<std::string, double> counts;
        double total = 0.0;
        for (const auto& label : labels_) counts[label] = 0.0;
        for (const auto& w : words)
            for (const auto& label : labels_)
                if (sets_.at(label).count(w)) {
                    counts[label] += 1.0;
                    total += 1.0;
                }
        if (total == 0.0) return std::nullopt;
        for (auto& [_, c] : counts) c /= total;
        return counts;
    }

private:
    std::vector<std::string> labels_;
    std::map<std::string, std::unordered_set<std::string>> sets_;
    Normalizer norm_;
};

struct LangProbResult {
    bool defined = false;
    std::map<std::string, double> mean_probs;
    double coverage = 0.0;  // fraction of hypotheses that were scoreable
    long n_scoreable = 0;
    long n_muted = 0;
};

// Mean per-hypothesis language distribution over non-muted, scoreable
// outputs. Muted outputs are excluded and counted rather than guessed at.
inline LangProbResult lang_prob(const std::vector<std::string>& hypotheses,
                                const LanguageDetector& detector) {
    if (detector.labels().empty()) throw InvalidInputError("lang_prob: detector has no labels");
    LangProbResult out;
    for (const auto& label : detector.labels()) out.mean_probs[label] = 0.0;
    for (const auto& h : hypotheses) {
        if (is_muted(h)) {
            ++out.n_muted;
            continue;
        }
        const auto probs = detector.detect(h);
        if (!probs) continue;
        for (const auto& [label, p] : *probs) out.mean_probs[label] += p;
        ++out.n_scoreable;
    }
    if (out.n_scoreable == 0) {
        out.mean_probs.clear();
        out.defined = false;
        out.coverage = 0.0;
        return out;
    }
    for (auto& [_, p] : out.mean_probs) p /= double(out.n_scoreable);
    out.defined = true;
    out.coverage = hypotheses.empty() ? 0.0 : double(out.n_scoreable) / double(hypotheses.size());
    return out;
}

// ----------------------------------------------------------------------------
// Attribute accuracy
// ----------------------------------------------------------------------------

// A hypothesis is credited when exactly one label's surface forms appear in
// the normalized text and that label matches the truth. Ambiguous or empty
// outputs count as wrong.
inline double attribute_accuracy(const std::vector<std::string>& hypotheses,
                                 const std::vector<std::string>& labels,
                                 const std::map<std::string, std::vector<std::string>>& label_lexicon,
                                 const Normalizer& norm = normalize_text) {
    if (label_lexicon.empty()) throw InvalidInputError("attribute_accuracy: empty lexicon");
    if (hypotheses.size() != labels.size())
        throw InvalidInputError("attribute_accuracy: hypothesis/label count mismatch");
    if (hypotheses.empty()) throw InvalidInputError("attribute_accuracy: empty input");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const auto words_v = split_ws(norm(hypotheses[i]));
        const std::set<std::string> words(words_v.begin(), words_v.end());
        std::string matched;
        int n_matched = 0;
        for (const auto& [label, forms] : label_lexicon) {
            bool hit = false;
            for (const auto& f : forms)
                if (words.count(norm(f))) {
                    hit = true;
                    break;
                }
            if (hit) {
                ++n_matched;
                matched = label;
            }
        }
        if (n_matched == 1 && matched == labels[i]) ++correct;
    }
    return 100.0 * double(correct) / double(hypotheses.size());
}

}  // namespace uaa::metrics
