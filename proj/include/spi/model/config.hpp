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

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>

#include "spi/error.hpp"

namespace spi {

enum class PriorMode { uniform, learnable };

inline const char* to_string(PriorMode m) { return m == PriorMode::uniform ? "uniform" : "learnable"; }

inline PriorMode parse_prior_mode(const std::string& s) {
    if (s == "uniform") {
        return PriorMode::uniform;
    }
    if (s == "learnable") {
        return PriorMode::learnable;
    }
    throw ContractError("unknown prior mode '" + s + "' (expected uniform|learnable)");
}

/// Architecture sizes plus the knowledge-prior mode; everything a checkpoint must agree on.
struct ModelConfig {
    std::size_t vocab = 64;
    std::size_t embed = 32;
    std::size_t hidden = 64;
    std::size_t latent = 16;
    std::size_t max_history = 64;
    std::size_t max_candidate = 32;
    std::size_t max_response = 32;
    PriorMode prior = PriorMode::uniform;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

    [[nodiscard]] std::string canonical() const {
        std::ostringstream out;
        out << "vocab=" << vocab << ";embed=" << embed << ";hidden=" << hidden << ";latent=" << latent
            << ";max_history=" << max_history << ";max_candidate=" << max_candidate << ";max_response=" << max_response
            << ";prior=" << to_string(prior);
        return out.str();
    }

    static ModelConfig from_canonical(const std::string& text) {
        ModelConfig cfg;
        std::istringstream in(text);
        std::string field;
        int seen = 0;
        while (std::getline(in, field, ';')) {
            const auto eq = field.find('=');
            require(eq != std::string::npos, "malformed config field '" + field + "'");
            const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
            if (key == "prior") {
                cfg.prior = parse_prior_mode(value);
            } else {
                std::size_t n = 0;
                try {
                    n = std::stoul(value);
                } catch (const std::exception&) {
                    throw ContractError("malformed config value '" + field + "'");
                }
                if (key == "vocab") cfg.vocab = n;
                else if (key == "embed") cfg.embed = n;
                else if (key == "hidden") cfg.hidden = n;
                else if (key == "latent") cfg.latent = n;
                else if (key == "max_history") cfg.max_history = n;
                else if (key == "max_candidate") cfg.max_candidate = n;
                else if (key == "max_response") cfg.max_response = n;
                else throw ContractError("unknown config key '" + key + "'");
            }
            ++seen;
        }
        require(seen == 8, "config fingerprint must list 8 fields, got " + std::to_string(seen));
        return cfg;
    }

    void validate() const {
        require(vocab > 4 && embed > 0 && hidden > 0 && latent > 0, "model sizes must be positive");
        require(max_history > 0 && max_candidate > 0 && max_response > 0, "length caps must be positive");
    }
};

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace spi
