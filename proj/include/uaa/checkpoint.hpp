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

// Model checkpoint container.
//
//   magic "UAAM" | u32 version | u32 len + config JSON (incl. vocabulary)
//   | u32 tensor count | per tensor: u32 len + name, u8 dtype (0=f64 1=f32),
//     u32 rows, u32 cols, raw column-major little-endian data
//   | u32 len + training-metrics JSON
//
// Tensors keep the precision they were trained in; loading into a
// double-precision model widens losslessly.

#include <cstdint>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "uaa/common.hpp"
#include "uaa/model.hpp"

namespace uaa::checkpoint {

using nlohmann::json;

inline constexpr char kMagic[4] = {'U', 'A', 'A', 'M'};
inline constexpr std::uint32_t kVersion = 1;

inline json config_to_json(const model::ModelConfig& c) {
    return json{{"sample_rate", c.sample_rate},
                {"conv1_channels", c.conv1_channels},
                {"conv1_kernel", c.conv1_kernel},
                {"conv1_stride", c.conv1_stride},
                {"conv2_kernel", c.conv2_kernel},
                {"conv2_stride", c.conv2_stride},
                {"d_model", c.d_model},
                {"n_heads", c.n_heads},
                {"ffn_mult", c.ffn_mult},
                {"enc_layers", c.enc_layers},
                {"dec_layers", c.dec_layers},
                {"max_decode_len", c.max_decode_len},
                {"seed", c.seed},
                {"vocab",
                 {{"tokens", c.vocab.tokens()},
                  {"pad_id", c.vocab.pad_id()},
                  {"eot_id", c.vocab.eot_id()},
                  {"sys_id", c.vocab.sys_id()},
                  {"sep_id", c.vocab.sep_id()}}}};
}

inline model::ModelConfig config_from_json(const json& j) {
    model::ModelConfig c;
    c.sample_rate = j.at("sample_rate").get<int>();
    c.conv1_channels = j.at("conv1_channels").get<int>();
    c.conv1_kernel = j.at("conv1_kernel").get<int>();
    c.conv1_stride = j.at("conv1_stride").get<int>();
    c.conv2_kernel = j.at("conv2_kernel").get<int>();
    c.conv2_stride = j.at("conv2_stride").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.ffn_mult = j.at("ffn_mult").get<int>();
    c.enc_layers = j.at("enc_layers").get<int>();
    c.dec_layers = j.at("dec_layers").get<int>();
    c.max_decode_len = j.at("max_decode_len").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const json& v = j.at("vocab");
    c.vocab = Vocabulary(v.at("tokens").get<std::vector<std::string>>(), v.at("pad_id").get<int>(),
                         v.at("eot_id").get<int>(), v.at("sys_id").get<int>(), v.at("sep_id").get<int>());
    return c;
}

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw InvalidInputError("checkpoint: truncated file");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}
inline void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, std::uint32_t(s.size()));
    os.write(s.data(), long(s.size()));
}
inline std::string get_str(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), long(n));
    if (!is) throw InvalidInputError("checkpoint: truncated string");
    return s;
}
}  // namespace detail

template <typename T>
void save(const std::string& path, const model::RefModel<T>& m, const json& train_metrics) {
    static_assert(sizeof(float) == 4 && sizeof(double) == 8);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("checkpoint: cannot open for writing: " + path);
    os.write(kMagic, 4);
    detail::put_u32(os, kVersion);
    detail::put_str(os, config_to_json(m.config()).dump());
    const auto& tensors = m.params().tensors;
    detail::put_u32(os, std::uint32_t(tensors.size()));
    for (const auto& [name, mat] : tensors) {
        detail::put_str(os, name);
        os.put(std::is_same_v<T, double> ? char(0) : char(1));
        detail::put_u32(os, std::uint32_t(mat.rows()));
        detail::put_u32(os, std::uint32_t(mat.cols()));
        os.write(reinterpret_cast<const char*>(mat.data()), long(std::size_t(mat.size()) * sizeof(T)));
    }
    detail::put_str(os, train_metrics.dump());
    if (!os) throw ConfigError("checkpoint: write failed: " + path);
}

template <typename T = double>
struct Loaded {
    model::RefModel<T> model;
    json train_metrics;
};

template <typename T = double>
Loaded<T> load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != std::string(kMagic, 4))
        throw InvalidInputError("checkpoint: bad magic (not a UAAM file): " + path);
    const std::uint32_t version = detail::get_u32(is);
    if (version != kVersion)
        throw InvalidInputError("checkpoint: unsupported version " + std::to_string(version));
    model::ModelConfig cfg = config_from_json(json::parse(detail::get_str(is)));

    model::Params<T> params;
    const std::uint32_t count = detail::get_u32(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = detail::get_str(is);
        const int dtype = is.get();
        const std::uint32_t rows = detail::get_u32(is);
        const std::uint32_t cols = detail::get_u32(is);
        ad::Mat<T> m(int(rows), int(cols));
        if (dtype == 0) {
            ad::Mat<double> tmp(int(rows), int(cols));
            is.read(reinterpret_cast<char*>(tmp.data()), long(std::size_t(tmp.size()) * 8));
            m = tmp.cast<T>();
        } else if (dtype == 1) {
            ad::Mat<float> tmp(int(rows), int(cols));
            is.read(reinterpret_cast<char*>(tmp.data()), long(std::size_t(tmp.size()) * 4));
            m = tmp.cast<T>();
        } else {
            throw InvalidInputError("checkpoint: unknown dtype tag");
        }
        if (!is) throw InvalidInputError("checkpoint: truncated tensor data");
        params.tensors.emplace_back(name, std::move(m));
    }
    json metrics = json::parse(detail::get_str(is));
    return {model::RefModel<T>(std::move(cfg), std::move(params)), std::move(metrics)};
}

}  // namespace uaa::checkpoint
