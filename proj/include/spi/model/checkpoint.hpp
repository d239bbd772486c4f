// Copyright 2026 The SPI Authors
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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "spi/model/params.hpp"

namespace spi {

// Layout:
//   "SPI1\n"
//   "tensors <count>\n"
//   "<name> f64 <d0>,<d1>,...\n"  one manifest line per tensor ("-" for rank 0), sorted by name
//   "data\n"
//   raw little-endian float64 payloads in manifest order
//   "fingerprint <16 hex digits> <canonical model config>\n"

namespace detail {

inline void put_le_f64(std::ostream& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline double get_le_f64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw ContractError("checkpoint payload truncated");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    return std::bit_cast<double>(bits);
}

inline std::string read_line(std::istream& in, const char* what) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ContractError(std::string("checkpoint truncated before ") + what);
    }
    return line;
}

} // namespace detail

inline void save_checkpoint(const ModelParams& params, std::ostream& out) {
    out << "SPI1\n";
    out << "tensors " << params.tensors().size() << "\n";
    for (const auto& [name, t] : params.tensors()) {
        out << name << " f64 ";
        if (t.rank() == 0) {
            out << "-";
        }
        for (std::size_t i = 0; i < t.rank(); ++i) {
            out << (i ? "," : "") << t.shape()[i];
        }
        out << "\n";
    }
    out << "data\n";
    for (const auto& [_, t] : params.tensors()) {
        for (double v : t.data()) {
            detail::put_le_f64(out, v);
        }
    }
    const std::string canonical = params.config().canonical();
    out << "fingerprint " << fnv1a_hex(canonical) << " " << canonical << "\n";
}

inline std::string checkpoint_bytes(const ModelParams& params) {
    std::ostringstream out(std::ios::binary);
    save_checkpoint(params, out);
    return out.str();
}

inline ModelParams load_checkpoint(std::istream& in) {
    if (detail::read_line(in, "magic") != "SPI1") {
        throw ContractError("not a checkpoint: missing SPI1 magic");
    }
    std::istringstream header(detail::read_line(in, "tensor count"));
    std::string word;
    std::size_t count = 0;
    if (!(header >> word >> count) || word != "tensors") {
        throw ContractError("checkpoint: malformed tensor count line");
    }
    std::vector<std::pair<std::string, Shape>> manifest;
    for (std::size_t k = 0; k < count; ++k) {
        std::istringstream line(detail::read_line(in, "manifest"));
        std::string name, dtype, dims;
        if (!(line >> name >> dtype >> dims) || dtype != "f64") {
            throw ContractError("checkpoint: malformed manifest entry " + std::to_string(k));
        }
        Shape shape;
        if (dims != "-") {
            std::istringstream ds(dims);
            std::string part;
            while (std::getline(ds, part, ',')) {
                shape.push_back(std::stoul(part));
            }
        }
        manifest.emplace_back(name, shape);
    }
    if (detail::read_line(in, "data marker") != "data") {
        throw ContractError("checkpoint: missing data marker");
    }
    std::vector<Tensor> payloads;
    for (const auto& [name, shape] : manifest) {
        Tensor t(shape);
        for (auto& v : t.data()) {
            v = detail::get_le_f64(in);
        }
        payloads.push_back(std::move(t));
    }
    std::istringstream fp(detail::read_line(in, "fingerprint"));
    std::string tag, hash, canonical;
    if (!(fp >> tag >> hash >> canonical) || tag != "fingerprint") {
        throw ContractError("checkpoint: malformed fingerprint line");
    }
    if (fnv1a_hex(canonical) != hash) {
        throw ContractError("checkpoint: fingerprint hash does not match its config");
    }
    ModelParams params(ModelConfig::from_canonical(canonical));
    for (std::size_t k = 0; k < manifest.size(); ++k) {
        params.set(manifest[k].first, std::move(payloads[k]));
    }
    return params;
}

/// Write through a temporary file and rename, so readers never observe a partial checkpoint.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ContractError("cannot open " + tmp.string() + " for writing");
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw ContractError("failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ContractError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    write_file_atomic(path, checkpoint_bytes(params));
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::istringstream in(read_file(path), std::ios::binary);
    return load_checkpoint(in);
}

} // namespace spi
