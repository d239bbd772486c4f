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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spi/error.hpp"
#include "spi/model/config.hpp"
#include "spi/model/example.hpp"
#include "spi/random.hpp"

namespace spi::data {

/// Knobs of the synthetic knowledge-grounded corpus.
struct SyntheticSpec {
    std::size_t vocab = 64;
    std::size_t candidates = 8;        // M
    std::size_t candidate_length = 6;  // the first key_length tokens double as the history
    std::size_t key_length = 2;
    std::size_t styles = 3;            // G response templates
    std::size_t train = 2000;
    std::size_t valid = 200;
    std::size_t test = 200;
    double rho = 0.5;                  // distractor similarity
    std::uint64_t seed = 1;

    [[nodiscard]] std::size_t first_marker() const noexcept { return Vocab::reserved; }
    [[nodiscard]] std::size_t first_content() const noexcept { return Vocab::reserved + 2 * styles; }
    [[nodiscard]] std::size_t content_count() const noexcept {
        return vocab > first_content() ? vocab - first_content() : 0;
    }
    [[nodiscard]] bool is_marker(Token t) const noexcept { return t >= first_marker() && t < first_content(); }

    /// Topics (first key token) reserved for the test split: every fifth content token.
    [[nodiscard]] bool is_test_topic(Token t) const noexcept {
        return t >= first_content() && (t - first_content()) % 5 == 4;
    }

    void validate() const {
        require(styles >= 1, "synthetic spec needs at least one style");
        require(rho >= 0.0 && rho <= 1.0, "rho must lie in [0, 1]");
        require(candidates >= 1, "synthetic spec needs at least one candidate");
        require(key_length >= 1 && key_length <= candidate_length, "key length must lie in [1, candidate_length]");
        const std::size_t need = std::max<std::size_t>(5, candidate_length + key_length);
        require(content_count() >= need,
                "vocabulary of " + std::to_string(vocab) + " leaves " + std::to_string(content_count()) +
                    " content tokens after " + std::to_string(first_content()) +
                    " reserved and template ids; at least " + std::to_string(need) + " are needed");
    }

    [[nodiscard]] std::string canonical() const {
        std::ostringstream os;
        os.precision(17);
        os << "vocab=" << vocab << ";candidates=" << candidates << ";candidate_length=" << candidate_length
           << ";key_length=" << key_length << ";styles=" << styles << ";train=" << train << ";valid=" << valid
           << ";test=" << test << ";rho=" << rho << ";seed=" << seed;
        return os.str();
    }

    [[nodiscard]] std::string fingerprint() const { return fnv1a_hex(canonical()); }
};

/// Response template g applied to content K. Patterns cycle with period three; markers are
/// unique per style.
inline Sequence apply_template(const SyntheticSpec& spec, std::size_t g, const Sequence& content) {
    require(g < spec.styles, "style index out of range");
    const Token a = spec.first_marker() + 2 * g;
    const Token b = a + 1;
    Sequence r;
    r.push_back(a);
    if (g % 3 == 1) {
        r.push_back(b);
    }
    r.insert(r.end(), content.begin(), content.end());
    if (g % 3 == 2) {
        r.push_back(b);
    }
    r.push_back(Vocab::eos);
    return r;
}

struct SyntheticCorpus {
    std::vector<DialogueExample> train;
    std::vector<DialogueExample> valid;
    std::vector<DialogueExample> test;
};

namespace detail {

inline Token draw_content(const SyntheticSpec& spec, Rng& rng) {
    return spec.first_content() + uniform_index(rng, spec.content_count());
}

inline Token draw_topic(const SyntheticSpec& spec, Rng& rng, bool test_split) {
    for (;;) {
        const Token t = draw_content(spec, rng);
        if (spec.is_test_topic(t) == test_split) {
            return t;
        }
    }
}

inline bool contains(const Sequence& s, std::size_t n, Token t) {
    for (std::size_t i = 0; i < n; ++i) {
        if (s[i] == t) {
            return true;
        }
    }
    return false;
}

inline DialogueExample make_example(const SyntheticSpec& spec, Rng& rng, std::size_t id, bool test_split) {
    const std::size_t L = spec.candidate_length;
    const std::size_t k = spec.key_length;
    Sequence gold(L);
    gold[0] = draw_topic(spec, rng, test_split);
    for (std::size_t i = 1; i < L; ++i) {
        // Key tokens are pairwise distinct so distractor keys can avoid all of them.
        do {
            gold[i] = draw_content(spec, rng);
        } while (i < k && contains(gold, i, gold[i]));
    }
    DialogueExample ex;
    ex.id = id;
    ex.history.assign(gold.begin(), gold.begin() + static_cast<std::ptrdiff_t>(k));
    const std::size_t gold_at = uniform_index(rng, spec.candidates);
    for (std::size_t m = 0; m < spec.candidates; ++m) {
        if (m == gold_at) {
            ex.candidates.push_back(gold);
            continue;
        }
        Sequence d = gold;
        for (std::size_t i = 0; i < L; ++i) {
            const bool key = i < k;
            if (!key && uniform_unit(rng) < spec.rho) {
                continue;
            }
            Token t;
            do {
                t = draw_content(spec, rng);
            } while (key ? contains(gold, k, t) : t == gold[i]);
            d[i] = t;
        }
        ex.candidates.push_back(std::move(d));
    }
    ex.gold_index = gold_at;
    ex.response = apply_template(spec, uniform_index(rng, spec.styles), gold);
    return ex;
}

} // namespace detail

/// Pure function of the spec. Train and valid draw topics from the non-held-out pool; test
/// topics come only from the held-out pool.
inline SyntheticCorpus generate_corpus(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticCorpus c;
    auto fill = [&](std::vector<DialogueExample>& out, std::size_t n, std::uint64_t stream, bool test_split) {
        Rng rng(derive_seed(spec.seed, stream));
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back(detail::make_example(spec, rng, i, test_split));
        }
    };
    fill(c.train, spec.train, 1, false);
    fill(c.valid, spec.valid, 2, false);
    fill(c.test, spec.test, 3, true);
    return c;
}

/// Template-aware brute force: the lowest candidate index i for which some style g reproduces
/// the response exactly.
inline std::optional<std::size_t> oracle_select(const SyntheticSpec& spec, const DialogueExample& ex) {
    for (std::size_t i = 0; i < ex.candidates.size(); ++i) {
        for (std::size_t g = 0; g < spec.styles; ++g) {
            if (apply_template(spec, g, ex.candidates[i]) == ex.response) {
                return i;
            }
        }
    }
    return std::nullopt;
}

/// The same dialogue with the knowledge replaced by a single empty candidate.
inline DialogueExample knowledge_blind(DialogueExample ex) {
    ex.candidates.assign(1, Sequence{});
    ex.gold_index = 0;
    return ex;
}

inline std::vector<DialogueExample> knowledge_blind(const std::vector<DialogueExample>& corpus) {
    std::vector<DialogueExample> out;
    out.reserve(corpus.size());
    for (const auto& ex : corpus) {
        out.push_back(knowledge_blind(ex));
    }
    return out;
}

/// Plain-text sidecar: one key=value per line followed by the fingerprint.
inline std::string spec_sidecar(const SyntheticSpec& spec) {
    std::string out;
    std::string canon = spec.canonical();
    std::size_t start = 0;
    while (start <= canon.size()) {
        const std::size_t end = std::min(canon.find(';', start), canon.size());
        out += canon.substr(start, end - start) + "\n";
        start = end + 1;
    }
    out += "fingerprint=" + spec.fingerprint() + "\n";
    return out;
}

} // namespace spi::data
