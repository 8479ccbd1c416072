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

// Synthetic attributed speech corpus.
//
// Each utterance is a sequence of fixed-duration tonal units. A unit carries
// the utterance's fundamental (drawn from the speaker's register band, which
// realizes the gender attribute acoustically) plus two partials whose
// frequencies identify the token within its language inventory. The two
// language inventories occupy disjoint spectral zones, so both selective
// attributes are present in the signal itself, not just in the labels.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uaa/common.hpp"
#include "uaa/types.hpp"
#include "uaa/wav.hpp"

namespace uaa::corpus {

using nlohmann::json;

struct RegisterBand {
    double lo_hz = 0.0;
    double hi_hz = 0.0;
};

struct CorpusConfig {
    int n_train = 2000;
    int n_heldout = 400;
    int min_tokens = 4;
    int max_tokens = 16;
    double phone_seconds = 0.1;
    int sample_rate = 16000;
    double gender_female_ratio = 0.5;   // fraction of F
    double language_a_ratio = 0.5;      // fraction of language A
    std::vector<std::string> inventory_a;
    std::vector<std::string> inventory_b;
    RegisterBand band_male{90.0, 150.0};
    RegisterBand band_female{220.0, 330.0};
    std::uint64_t seed = 1;

    static std::vector<std::string> default_inventory(char lang, int n = 16) {
        std::vector<std::string> inv;
        for (int i = 0; i < n; ++i) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "%c%02d", lang, i);
            inv.emplace_back(buf);
        }
        return inv;
    }

    static CorpusConfig defaults() {
        CorpusConfig c;
        c.inventory_a = default_inventory('a');
        c.inventory_b = default_inventory('b');
        return c;
    }

    void validate() const {
        if (n_train < 0 || n_heldout < 0) throw ConfigError("corpus: negative split size");
        if (inventory_a.empty() || inventory_b.empty())
            throw ConfigError("corpus: language inventory must be nonempty");
        if (inventory_a.size() > 16 || inventory_b.size() > 16)
            throw ConfigError("corpus: at most 16 tokens per inventory are renderable");
        for (const auto& t : inventory_a)
            if (std::find(inventory_b.begin(), inventory_b.end(), t) != inventory_b.end())
                throw ConfigError("corpus: inventories must be disjoint (token '" + t + "')");
        if (min_tokens < 1 || max_tokens < min_tokens)
            throw ConfigError("corpus: bad tokens_per_utterance range");
        if (phone_seconds <= 0) throw ConfigError("corpus: phone duration must be positive");
        if (sample_rate <= 0) throw ConfigError("corpus: sample rate must be positive");
        if (gender_female_ratio <= 0 || gender_female_ratio >= 1 || language_a_ratio <= 0 ||
            language_a_ratio >= 1)
            throw ConfigError("corpus: balance ratios must lie in (0,1)");
        if (band_male.lo_hz <= 0 || band_male.hi_hz <= band_male.lo_hz ||
            band_female.lo_hz <= 0 || band_female.hi_hz <= band_female.lo_hz)
            throw ConfigError("corpus: malformed register band");
        if (!(band_male.hi_hz < band_female.lo_hz || band_female.hi_hz < band_male.lo_hz))
            throw ConfigError("corpus: register bands must not overlap");
    }
};

// ----------------------------------------------------------------------------
// Rendering
// ----------------------------------------------------------------------------

// Partial frequencies for token k of language zone 0 (A) or 1 (B). The zones
// are spectrally disjoint: A lives below ~3 kHz, B above ~3.6 kHz.
inline std::pair<double, double> token_partials(int zone, int k) {
    const double base = zone == 0 ? 600.0 : 3600.0;
    const int r = k / 4;
    const int c = k % 4;
    return {base + 300.0 * r, base + 1200.0 + 400.0 * c};
}

// amplitudes: fundamental + two partials; worst-case peak 0.9
constexpr double kAmpF0 = 0.35;
constexpr double kAmpP1 = 0.30;
constexpr double kAmpP2 = 0.25;

// Render one tonal unit into out[offset .. offset+n). A raised-cosine ramp
// at both ends avoids clicks at unit boundaries.
inline void render_unit(std::vector<double>& out, std::size_t offset, int n, int sample_rate,
                        double f0_hz, double f1_hz, double f2_hz) {
    const double two_pi = 6.283185307179586;
    const int ramp = std::min(n / 4, int(0.005 * sample_rate));
    for (int i = 0; i < n; ++i) {
        const double t = double(i) / sample_rate;
        double x = kAmpF0 * std::sin(two_pi * f0_hz * t) + kAmpP1 * std::sin(two_pi * f1_hz * t) +
                   kAmpP2 * std::sin(two_pi * f2_hz * t);
        if (ramp > 0) {
            if (i < ramp) x *= 0.5 * (1.0 - std::cos(3.141592653589793 * (i + 1) / (ramp + 1)));
            const int from_end = n - 1 - i;
            if (from_end < ramp)
                x *= 0.5 * (1.0 - std::cos(3.141592653589793 * (from_end + 1) / (ramp + 1)));
        }
        out[offset + std::size_t(i)] = wav::quantize_sample(x);
    }
}

inline int language_zone(const std::string& lang) {
    if (lang == "A") return 0;
    if (lang == "B") return 1;
    throw InvalidInputError("corpus: unknown language value '" + lang + "'");
}

// Per-utterance fundamental, drawn from the register band of the speaker.
inline double draw_f0(const CorpusConfig& cfg, const std::string& gender, std::uint64_t utt_seed) {
    const RegisterBand& band = gender == "F" ? cfg.band_female : cfg.band_male;
    Rng r(derive_seed(utt_seed, 0xf0));
    return r.uniform(band.lo_hz, band.hi_hz);
}

// Render a transcript to audio. Deterministic given (transcript, attributes,
// utt_seed). Output samples lie on the PCM16 grid so a WAV round trip is
// exact.
inline Waveform render_utterance(const std::string& transcript,
                                 const std::map<std::string, std::string>& attributes,
                                 const CorpusConfig& cfg, std::uint64_t utt_seed) {
    auto git = attributes.find("gender");
    auto lit = attributes.find("language");
    if (git == attributes.end() || lit == attributes.end())
        throw InvalidInputError("corpus: utterance missing gender/language attribute");
    const int zone = language_zone(lit->second);
    const auto& inv = zone == 0 ? cfg.inventory_a : cfg.inventory_b;

    const double f0 = draw_f0(cfg, git->second, utt_seed);
    const int unit_n = int(cfg.phone_seconds * cfg.sample_rate + 0.5);
    const auto words = split_ws(transcript);

    Waveform w;
    w.sample_rate = cfg.sample_rate;
    w.samples.assign(words.size() * std::size_t(unit_n), 0.0);
    for (std::size_t i = 0; i < words.size(); ++i) {
        auto it = std::find(inv.begin(), inv.end(), words[i]);
        if (it == inv.end())
            throw InvalidInputError("corpus: token '" + words[i] + "' not in inventory of language " +
                                    lit->second);
        const int k = int(it - inv.begin());
        const auto [f1, f2] = token_partials(zone, k);
        render_unit(w.samples, i * std::size_t(unit_n), unit_n, cfg.sample_rate, f0, f1, f2);
    }
    return w;
}

// ----------------------------------------------------------------------------
// Corpus generation
// ----------------------------------------------------------------------------

struct Corpus {
    std::vector<Utterance> train;
    std::vector<Utterance> heldout;

    const std::vector<Utterance>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "heldout") return heldout;
        throw InvalidInputError("corpus: unknown split '" + name + "'");
    }
};

// checksum over utterance ids and transcripts; used as corpus provenance id
inline std::string corpus_id(const Corpus& c) {
    Fnv1a f;
    for (const auto* split : {&c.train, &c.heldout})
        for (const auto& u : *split) {
            f.update(u.id.data(), u.id.size());
            f.update(u.transcript.data(), u.transcript.size());
        }
    return f.hex();
}

namespace detail {

// exact-quota label assignment, shuffled deterministically
inline std::vector<std::string> quota_labels(int n, double positive_ratio, const std::string& pos,
                                             const std::string& neg, Rng& rng) {
    const int n_pos = int(std::lround(positive_ratio * n));
    std::vector<std::string> labels{std::size_t(n), std::string()};
    for (int i = 0; i < n; ++i) labels[std::size_t(i)] = i < n_pos ? pos : neg;
    rng.shuffle(labels);
    return labels;
}

inline std::vector<Utterance> generate_split(const CorpusConfig& cfg, const std::string& prefix,
                                             int count, std::uint64_t split_stream) {
    Rng rng(derive_seed(cfg.seed, split_stream));
    auto genders = quota_labels(count, cfg.gender_female_ratio, "F", "M", rng);
    auto langs = quota_labels(count, cfg.language_a_ratio, "A", "B", rng);

    std::vector<Utterance> out;
    out.reserve(std::size_t(count));
    for (int i = 0; i < count; ++i) {
        Utterance u;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s-%06d", prefix.c_str(), i);
        u.id = idbuf;
        u.attributes["gender"] = genders[std::size_t(i)];
        u.attributes["language"] = langs[std::size_t(i)];

        const std::uint64_t utt_seed = derive_seed(cfg.seed, split_stream * 1000003ULL + std::uint64_t(i));
        Rng ur(utt_seed);
        const int zone = language_zone(u.attributes["language"]);
        const auto& inv = zone == 0 ? cfg.inventory_a : cfg.inventory_b;
        const int n_tokens = cfg.min_tokens + int(ur.next_below(std::uint64_t(cfg.max_tokens - cfg.min_tokens + 1)));
        std::vector<std::string> words{std::size_t(n_tokens), std::string()};
        for (auto& w : words) w = inv[std::size_t(ur.next_below(inv.size()))];
        u.transcript = join(words, " ");
        u.waveform = render_utterance(u.transcript, u.attributes, cfg, utt_seed);
        out.push_back(std::move(u));
    }
    return out;
}

}  // namespace detail

inline Corpus generate_corpus(const CorpusConfig& cfg) {
    cfg.validate();
    Corpus c;
    c.train = detail::generate_split(cfg, "train", cfg.n_train, 1);
    c.heldout = detail::generate_split(cfg, "heldout", cfg.n_heldout, 2);
    return c;
}

// ----------------------------------------------------------------------------
// Manifest I/O
//
// JSON-lines, one utterance per line:
//   {"id": ..., "audio": "wav/<id>.wav", "text": ..., "attributes": {...},
//    "sample_rate": 16000}
// An inline "render" object may replace "audio"; it is self-contained:
//   {"render": {"f0_hz": ..., "phone_seconds": ..., "units": [[f1,f2], ...]}}
// Split membership is carried by the id prefix: ids starting with "heldout"
// load into the held-out split, everything else into train.
// ----------------------------------------------------------------------------

struct ManifestError {
    int line = 0;
    std::string message;
};

struct LoadResult {
    Corpus corpus;
    std::vector<ManifestError> errors;
};

// Writes manifest.jsonl plus one WAV per utterance under <dir>/wav/.
inline std::string write_manifest(const Corpus& c, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "wav");
    const std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
    std::ofstream os(manifest_path, std::ios::binary);
    if (!os) throw ConfigError("corpus: cannot write manifest: " + manifest_path);
    for (const auto* split : {&c.train, &c.heldout}) {
        for (const auto& u : *split) {
            const std::string rel = "wav/" + u.id + ".wav";
            wav::write((fs::path(dir) / rel).string(), u.waveform);
            json line = {{"id", u.id},
                         {"audio", rel},
                         {"text", u.transcript},
                         {"attributes", u.attributes},
                         {"sample_rate", u.waveform.sample_rate}};
            os << line.dump() << "\n";
        }
    }
    if (!os) throw ConfigError("corpus: manifest write failed: " + manifest_path);
    return manifest_path;
}

inline Waveform render_inline(const json& spec, const std::string& text, int sample_rate) {
    const double f0 = spec.at("f0_hz").get<double>();
    const double phone_s = spec.at("phone_seconds").get<double>();
    const auto units = spec.at("units").get<std::vector<std::vector<double>>>();
    const auto words = split_ws(text);
    if (units.size() != words.size())
        throw InvalidInputError("render spec: units count does not match text");
    const int unit_n = int(phone_s * sample_rate + 0.5);
    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.assign(words.size() * std::size_t(unit_n), 0.0);
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (units[i].size() != 2) throw InvalidInputError("render spec: unit needs [f1, f2]");
        render_unit(w.samples, i * std::size_t(unit_n), unit_n, sample_rate, f0, units[i][0], units[i][1]);
    }
    return w;
}

inline LoadResult load_manifest(const std::string& path) {
    namespace fs = std::filesystem;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("corpus: cannot open manifest: " + path);
    const fs::path base = fs::path(path).parent_path();

    LoadResult res;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            json j = json::parse(line);
            Utterance u;
            u.id = j.at("id").get<std::string>();
            u.transcript = j.at("text").get<std::string>();
            const int sr = j.at("sample_rate").get<int>();
            if (j.contains("attributes"))
                for (auto& [k, v] : j.at("attributes").items())
                    u.attributes[k] = v.get<std::string>();
            if (j.contains("audio")) {
                fs::path ap = j.at("audio").get<std::string>();
                if (ap.is_relative()) ap = base / ap;
                u.waveform = wav::read(ap.string());
                if (u.waveform.sample_rate != sr)
                    throw InvalidInputError("sample_rate mismatch between manifest and WAV");
            } else if (j.contains("render")) {
                u.waveform = render_inline(j.at("render"), u.transcript, sr);
            } else {
                throw InvalidInputError("line needs either \"audio\" or \"render\"");
            }
            if (u.id.rfind("heldout", 0) == 0)
                res.corpus.heldout.push_back(std::move(u));
            else
                res.corpus.train.push_back(std::move(u));
        } catch (const std::exception& e) {
            res.errors.push_back({line_no, e.what()});
        }
    }
    return res;
}

// ----------------------------------------------------------------------------
// Attribute functions
// ----------------------------------------------------------------------------

// Binary condition over utterances, read from ground-truth labels.
struct AttributeFunction {
    std::string name;
    std::string positive_value;

    int operator()(const Utterance& u) const {
        auto it = u.attributes.find(name);
        if (it == u.attributes.end())
            throw InvalidInputError("attribute '" + name + "' undefined for utterance " + u.id);
        return it->second == positive_value ? 1 : 0;
    }
};

inline AttributeFunction attribute_fn(const Corpus& c, const std::string& name,
                                      const std::string& positive_value) {
    for (const auto* split : {&c.train, &c.heldout})
        for (const auto& u : *split)
            if (!u.attributes.count(name))
                throw ConfigError("attribute '" + name + "' is not configured on the corpus");
    return AttributeFunction{name, positive_value};
}

// Token-by-token mapping between the two inventories; the surrogate
// "translation" reference for st-style prompts. An involution: applying it
// twice returns the original transcript.
inline std::string translate_transcript(const std::string& transcript, const CorpusConfig& cfg) {
    if (cfg.inventory_a.size() != cfg.inventory_b.size())
        throw ConfigError("corpus: translation needs equal-size inventories");
    std::vector<std::string> out;
    for (const auto& w : split_ws(transcript)) {
        auto ia = std::find(cfg.inventory_a.begin(), cfg.inventory_a.end(), w);
        if (ia != cfg.inventory_a.end()) {
            out.push_back(cfg.inventory_b[std::size_t(ia - cfg.inventory_a.begin())]);
            continue;
        }
        auto ib = std::find(cfg.inventory_b.begin(), cfg.inventory_b.end(), w);
        if (ib != cfg.inventory_b.end()) {
            out.push_back(cfg.inventory_a[std::size_t(ib - cfg.inventory_b.begin())]);
            continue;
        }
        throw InvalidInputError("corpus: token '" + w + "' not in either inventory");
    }
    return join(out, " ");
}

}  // namespace uaa::corpus
