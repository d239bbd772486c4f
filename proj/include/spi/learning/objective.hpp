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
#include <vector>

#include "spi/diff/ops.hpp"
#include "spi/model/network.hpp"

namespace spi {

/// Multi-hot targets over the M candidates: gold ∪ posterior-selected.
struct LabelSet {
    std::vector<double> y;

    [[nodiscard]] std::size_t positives() const {
        std::size_t n = 0;
        for (double v : y) {
            n += v == 1.0;
        }
        return n;
    }
};

inline LabelSet make_labels(std::size_t m, std::optional<std::size_t> gold, std::size_t selected) {
    require(selected < m, "selected index out of range");
    LabelSet labels{std::vector<double>(m, 0.0)};
    labels.y[selected] = 1.0;
    if (gold) {
        require(*gold < m, "gold index out of range");
        labels.y[*gold] = 1.0;
    }
    return labels;
}

/// Heads updated by the ascent step on the complete-data log-likelihood.
inline HeadSet model_heads(PriorMode prior) {
    HeadSet heads = Head::encoder | Head::latent_prior;
    heads = heads | Head::decoder;
    if (prior == PriorMode::learnable) {
        heads = heads | Head::knowledge_prior;
    }
    return heads;
}

/// Terms of the complete-data log-likelihood at a fixed posterior sample (s, z).
struct CompleteDataTerms {
    Var total;
    Var latent;          // log p(z | C_s) up to a constant
    Var reconstruction;  // log p_β(R | z, C_s)
    Var knowledge;       // Σ_{i: y_i = 1} log p_{α1}(i | C); learnable prior only
};

/// log p(z | C_s) + log p_β(R | z, C_s), plus Σ_{i: y_i = 1} log p_{α1}(i | C) under the learnable
/// prior. z enters as a constant.
inline CompleteDataTerms complete_data_log_likelihood(ParamBinder& p, const DialogueExample& ex, std::size_t s,
                                                      const Tensor& z, const LabelSet* prior_labels) {
    diff::Tape& tape = p.tape();
    const bool learnable = p.config().prior == PriorMode::learnable;
    CompleteDataTerms out;
    Encoding e;
    if (learnable) {
        require(prior_labels != nullptr && prior_labels->y.size() == ex.candidates.size(),
                "learnable prior needs one label per candidate");
        const auto encodings = encode_all(p, ex);
        std::vector<Var> scores;
        for (const auto& enc : encodings) {
            scores.push_back(selection_score(p, "prior_s", enc));
        }
        Var log_prior = diff::log_softmax(stack_scores(scores));
        Var knowledge = tape.constant(Tensor::scalar(0.0));
        for (std::size_t i = 0; i < prior_labels->y.size(); ++i) {
            if (prior_labels->y[i] == 1.0) {
                knowledge = diff::add(knowledge, diff::reshape(diff::slice_cols(log_prior, i, i + 1), Shape{}));
            }
        }
        out.knowledge = knowledge;
        e = encodings.at(s);
    } else {
        e = encode_context(p, ex, s);
    }
    Var zv = as_row(tape, z);
    out.latent = latent_log_density(zv, latent_mean(p, e));
    const ResponsePlan r = plan_teacher_forced(p, ex.response);
    const MemoryPlan m = plan_memory(p, r, e);
    out.reconstruction = response_log_prob(p, r, m, zv);
    out.total = diff::add(out.latent, out.reconstruction);
    if (learnable) {
        out.total = diff::add(out.total, out.knowledge);
    }
    return out;
}

/// Binary cross-entropy of the initializer against multi-hot labels:
///   -Σ_i [y_i log σ(f_i) + (1 - y_i) log(1 - σ(f_i))] = Σ_i softplus(f_i) - y_i f_i.
inline Var initializer_cross_entropy(ParamBinder& p, const DialogueExample& ex, const LabelSet& labels) {
    require(labels.y.size() == ex.candidates.size(), "label set has " + std::to_string(labels.y.size()) +
                                                          " entries for " + std::to_string(ex.candidates.size()) +
                                                          " candidates");
    const auto encodings = encode_all(p, ex);
    std::vector<Var> scores;
    for (const auto& enc : encodings) {
        scores.push_back(selection_score(p, "init", enc));
    }
    Var f = stack_scores(scores);
    Var y = p.tape().constant(Tensor(Shape{1, labels.y.size()}, labels.y));
    return diff::sum(diff::sub(diff::softplus(f), diff::multiply(y, f)));
}

} // namespace spi
