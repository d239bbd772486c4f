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
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "spi/error.hpp"
#include "spi/model/example.hpp"

namespace spi::metrics {

using NgramCounts = std::map<Sequence, std::size_t>;

inline NgramCounts ngram_counts(const Sequence& s, std::size_t n) {
    NgramCounts counts;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
        ++counts[Sequence(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

inline std::size_t ngram_total(const Sequence& s, std::size_t n) { return s.size() >= n ? s.size() - n + 1 : 0; }

/// Σ_g min(count_a(g), count_b(g)).
inline std::size_t clipped_overlap(const NgramCounts& a, const NgramCounts& b) {
    std::size_t overlap = 0;
    for (const auto& [g, c] : a) {
        const auto it = b.find(g);
        if (it != b.end()) {
            overlap += std::min(c, it->second);
        }
    }
    return overlap;
}

/// Fraction of positions where the prediction equals the gold index.
inline double selection_accuracy(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& golds) {
    require(predictions.size() == golds.size(), "selection_accuracy: " + std::to_string(predictions.size()) +
                                                     " predictions for " + std::to_string(golds.size()) + " golds");
    require(!predictions.empty(), "selection_accuracy: no examples");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        hits += predictions[i] == golds[i];
    }
    return static_cast<double>(hits) / static_cast<double>(golds.size());
}

/// Corpus BLEU up to order n: geometric mean of clipped n-gram precisions times the brevity
/// penalty. An order with no clipped matches uses (0 + 1) / (total + 1).
inline double bleu_n(const std::vector<Sequence>& candidates, const std::vector<Sequence>& references, std::size_t n) {
    require(n >= 1 && n <= 4, "bleu order must lie in 1..4");
    require(candidates.size() == references.size(), "bleu: candidate and reference counts differ");
    require(!candidates.empty(), "bleu: empty candidate set");
    std::size_t cand_len = 0;
    std::size_t ref_len = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cand_len += candidates[i].size();
        ref_len += references[i].size();
    }
    if (cand_len == 0) {
        return 0.0;
    }
    double log_sum = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        std::size_t matches = 0;
        std::size_t total = 0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            matches += clipped_overlap(ngram_counts(candidates[i], k), ngram_counts(references[i], k));
            total += ngram_total(candidates[i], k);
        }
        const double p = matches == 0 ? 1.0 / static_cast<double>(total + 1)
                                      : static_cast<double>(matches) / static_cast<double>(total);
        log_sum += std::log(p);
    }
    const double bp = cand_len >= ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return bp * std::exp(log_sum / static_cast<double>(n));
}

/// n-gram F1 of one pair; 0 when either side has no n-grams or nothing overlaps.
inline double rouge_n_pair(const Sequence& candidate, const Sequence& reference, std::size_t n) {
    const std::size_t tc = ngram_total(candidate, n);
    const std::size_t tr = ngram_total(reference, n);
    if (tc == 0 || tr == 0) {
        return 0.0;
    }
    const std::size_t overlap = clipped_overlap(ngram_counts(candidate, n), ngram_counts(reference, n));
    if (overlap == 0) {
        return 0.0;
    }
    const double precision = static_cast<double>(overlap) / static_cast<double>(tc);
    const double recall = static_cast<double>(overlap) / static_cast<double>(tr);
    return 2.0 * precision * recall / (precision + recall);
}

/// Corpus mean of per-pair n-gram F1.
inline double rouge_n(const std::vector<Sequence>& candidates, const std::vector<Sequence>& references, std::size_t n) {
    require(n >= 1, "rouge order must be at least 1");
    require(candidates.size() == references.size(), "rouge: candidate and reference counts differ");
    require(!candidates.empty(), "rouge: empty candidate set");
    double sum = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        sum += rouge_n_pair(candidates[i], references[i], n);
    }
    return sum / static_cast<double>(candidates.size());
}

/// Unique n-grams over total n-grams across the corpus; 0 when there are none.
inline double distinct_n(const std::vector<Sequence>& candidates, std::size_t n) {
    require(n >= 1, "distinct order must be at least 1");
    std::set<Sequence> unique;
    std::size_t total = 0;
    for (const auto& c : candidates) {
        for (const auto& [g, count] : ngram_counts(c, n)) {
            unique.insert(g);
            total += count;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

} // namespace spi::metrics
