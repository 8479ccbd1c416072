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

// Minimal RIFF/WAVE reader and writer. Only 16-bit PCM mono is supported,
// which is all the corpus format requires. Values round-trip exactly on the
// PCM16 grid sample = q / 32767, q in [-32767, 32767].

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "uaa/common.hpp"
#include "uaa/types.hpp"

namespace uaa::wav {

inline std::int16_t quantize16(double x) {
    double q = x * 32767.0;
    if (q > 32767.0) q = 32767.0;
    if (q < -32767.0) q = -32767.0;
    return std::int16_t(q >= 0 ? q + 0.5 : q - 0.5);
}

// snap a sample to the PCM16 grid without writing a file
inline double quantize_sample(double x) { return double(quantize16(x)) / 32767.0; }

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}
inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}
inline std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return std::uint16_t(b[0] | (b[1] << 8));
}
}  // namespace detail

inline void write(const std::string& path, const Waveform& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("wav: cannot open for writing: " + path);
    const std::uint32_t n = std::uint32_t(w.samples.size());
    const std::uint32_t data_bytes = n * 2;
    os.write("RIFF", 4);
    detail::put_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    detail::put_u32(os, 16);
    detail::put_u16(os, 1);  // PCM
    detail::put_u16(os, 1);  // mono
    detail::put_u32(os, std::uint32_t(w.sample_rate));
    detail::put_u32(os, std::uint32_t(w.sample_rate) * 2);
    detail::put_u16(os, 2);
    detail::put_u16(os, 16);
    os.write("data", 4);
    detail::put_u32(os, data_bytes);
    for (double x : w.samples) {
        const std::int16_t q = quantize16(x);
        detail::put_u16(os, std::uint16_t(q));
    }
    if (!os) throw ConfigError("wav: write failed: " + path);
}

inline Waveform read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("wav: cannot open: " + path);
    char tag[4];
    is.read(tag, 4);
    if (!is || std::string(tag, 4) != "RIFF") throw InvalidInputError("wav: not a RIFF file: " + path);
    detail::get_u32(is);
    is.read(tag, 4);
    if (!is || std::string(tag, 4) != "WAVE") throw InvalidInputError("wav: not a WAVE file: " + path);

    Waveform w;
    bool have_fmt = false;
    while (is) {
        is.read(tag, 4);
        if (!is) break;
        const std::uint32_t chunk = detail::get_u32(is);
        const std::string name(tag, 4);
        if (name == "fmt ") {
            const std::uint16_t fmt = detail::get_u16(is);
            const std::uint16_t channels = detail::get_u16(is);
            w.sample_rate = int(detail::get_u32(is));
            detail::get_u32(is);
            detail::get_u16(is);
            const std::uint16_t bits = detail::get_u16(is);
            if (fmt != 1 || channels != 1 || bits != 16)
                throw InvalidInputError("wav: only 16-bit PCM mono is supported: " + path);
            if (chunk > 16) is.ignore(chunk - 16);
            have_fmt = true;
        } else if (name == "data") {
            if (!have_fmt) throw InvalidInputError("wav: data chunk before fmt: " + path);
            const std::uint32_t n = chunk / 2;
            w.samples.resize(n);
            for (std::uint32_t i = 0; i < n; ++i) {
                const std::int16_t q = std::int16_t(detail::get_u16(is));
                w.samples[i] = double(q) / 32767.0;
            }
            if (!is) throw InvalidInputError("wav: truncated data chunk: " + path);
            return w;
        } else {
            is.ignore(chunk + (chunk & 1));
        }
    }
    throw InvalidInputError("wav: no data chunk: " + path);
}

}  // namespace uaa::wav
