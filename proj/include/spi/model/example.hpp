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

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "spi/error.hpp"

namespace spi {

using Token = std::size_t;
using Sequence = std::vector<Token>;

/// Dense token ids 0..V-1 with four reserved ids at the bottom.
class Vocab {
public:
    static constexpr Token pad = 0;
    static constexpr Token bos = 1;
    static constexpr Token eos = 2;
    static constexpr Token sep = 3;
    static constexpr std::size_t reserved = 4;

    explicit Vocab(std::size_t size) : size_(size) {
        require(size > reserved, "vocabulary must hold more than the " + std::to_string(reserved) + " reserved ids");
    }

    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] bool contains(Token t) const noexcept { return t < size_; }

    [[nodiscard]] static std::string name(Token t) {
        switch (t) {
            case pad: return "<pad>";
            case bos: return "<bos>";
            case eos: return "<eos>";
            case sep: return "<sep>";
            default: return "t" + std::to_string(t);
        }
    }

private:
    std::size_t size_;
};

/// History, M knowledge candidates, optional gold index, and the response.
struct DialogueExample {
    std::size_t id = 0;
    Sequence history;
    std::vector<Sequence> candidates;
    std::optional<std::size_t> gold_index;
    Sequence response;

    [[nodiscard]] std::size_t num_candidates() const noexcept { return candidates.size(); }

    friend bool operator==(const DialogueExample&, const DialogueExample&) = default;
};

/// Throws ContractError describing the first violated invariant.
inline void validate(const DialogueExample& ex, std::size_t vocab_size) {
    require(!ex.candidates.empty(), "example " + std::to_string(ex.id) + " has no knowledge candidates");
    if (ex.gold_index) {
        require(*ex.gold_index < ex.candidates.size(), "example " + std::to_string(ex.id) + ": gold_index " +
                                                           std::to_string(*ex.gold_index) + " out of range for " +
                                                           std::to_string(ex.candidates.size()) + " candidates");
    }
    auto check = [&](const Sequence& seq, const char* what) {
        for (Token t : seq) {
            require(t < vocab_size, "example " + std::to_string(ex.id) + ": " + what + " token " + std::to_string(t) +
                                        " >= vocabulary size " + std::to_string(vocab_size));
        }
    };
    check(ex.history, "history");
    for (const auto& c : ex.candidates) {
        check(c, "candidate");
    }
    check(ex.response, "response");
}

/// Response up to and including its first end-of-sequence token.
inline Sequence terminated_response(const Sequence& response, std::size_t max_len) {
    Sequence out;
    for (Token t : response) {
        out.push_back(t);
        if (t == Vocab::eos) {
            break;
        }
    }
    require(!out.empty() && out.back() == Vocab::eos, "response must end with the end-of-sequence token");
    if (out.size() > max_len) {
        out.resize(max_len);
        out.back() = Vocab::eos;
    }
    return out;
}

} // namespace spi
