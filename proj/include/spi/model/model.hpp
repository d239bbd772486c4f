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
#include <numeric>
#include <vector>

#include "spi/diff/ops.hpp"
#include "spi/model/network.hpp"

namespace spi {

/// Forward-only evaluations of the generative model on plain tensors.

struct ContextRepresentation {
    Tensor states;  // n×H
    Tensor pooled;  // 1×H
};

inline ContextRepresentation encode_context(const ModelParams& params, const DialogueExample& ex, std::size_t s) {
    diff::Tape tape;
    ParamBinder p(tape, params);
    const Encoding e = encode_context(p, ex, s);
    return {e.states.value(), e.pooled.value()};
}

/// Raw f_{α1}(C_i) for every candidate. Only meaningful under the learnable prior.
inline std::vector<double> knowledge_prior_logits(const ModelParams& params, const DialogueExample& ex) {
    require(params.config().prior == PriorMode::learnable,
            "knowledge prior logits requested under the uniform prior");
    diff::Tape tape;
    ParamBinder p(tape, params);
    std::vector<double> out;
    for (const auto& e : encode_all(p, ex)) {
        out.push_back(selection_score(p, "prior_s", e).value().item());
    }
    return out;
}

/// Pre-sigmoid initializer scores f_γ(C_i). Ranking uses these so saturation cannot create ties.
inline std::vector<double> initializer_scores(const ModelParams& params, const DialogueExample& ex) {
    require(params.config().prior == PriorMode::uniform, "initializer scores requested under the learnable prior");
    diff::Tape tape;
    ParamBinder p(tape, params);
    std::vector<double> out;
    for (const auto& e : encode_all(p, ex)) {
        out.push_back(selection_score(p, "init", e).value().item());
    }
    return out;
}

/// Per-candidate initializer probabilities σ(f_γ(C_i)) ∈ (0,1).
inline std::vector<double> initializer_logits(const ModelParams& params, const DialogueExample& ex) {
    auto scores = initializer_scores(params, ex);
    for (auto& v : scores) {
        v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return scores;
}

/// First index of the maximum; lowest index wins ties.
inline std::size_t argmax(const std::vector<double>& v) {
    require(!v.empty(), "argmax of an empty list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

/// Indices of the S largest scores, returned in increasing index order. Ties go to lower indices.
inline std::vector<std::size_t> top_s(const std::vector<double>& scores, std::size_t s) {
    require(s >= 1 && s <= scores.size(), "top-S size " + std::to_string(s) + " outside [1, " +
                                              std::to_string(scores.size()) + "]");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(s);
    std::sort(order.begin(), order.end());
    return order;
}

/// μ = f_{α2}(C_s) as a d-vector.
inline Tensor latent_prior_mean(const ModelParams& params, const DialogueExample& ex, std::size_t s) {
    diff::Tape tape;
    ParamBinder p(tape, params);
    const Encoding e = encode_context(p, ex, s);
    return latent_mean(p, e).value().reshaped(Shape{params.config().latent});
}

/// log N(z; μ, I) without its normalizing constant.
inline double latent_prior_log_density(const Tensor& z, const Tensor& mu) {
    require(z.size() == mu.size(), "latent dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        s += (z[i] - mu[i]) * (z[i] - mu[i]);
    }
    return -0.5 * s;
}

inline void check_latent(const ModelParams& params, const Tensor& z) {
    require(z.size() == params.config().latent, "latent vector has " + std::to_string(z.size()) +
                                                    " entries, model expects " +
                                                    std::to_string(params.config().latent));
    if (!z.all_finite()) {
        throw NumericError("latent vector is not finite");
    }
}

/// log p_β(R | s, z, C) by teacher forcing.
inline double decode_logprob(const ModelParams& params, std::size_t s, const Tensor& z, const DialogueExample& ex) {
    check_latent(params, z);
    diff::Tape tape;
    ParamBinder p(tape, params);
    const Encoding e = encode_context(p, ex, s);
    const ResponsePlan r = plan_teacher_forced(p, ex.response);
    const MemoryPlan m = plan_memory(p, r, e);
    return response_log_prob(p, r, m, as_row(tape, z)).value().item();
}

/// Next-token logits after `prefix` (tokens following the implicit begin-of-sequence).
inline std::vector<double> decode_step(const ModelParams& params, std::size_t s, const Tensor& z,
                                       const DialogueExample& ex, const Sequence& prefix) {
    check_latent(params, z);
    require(prefix.size() < params.config().max_response,
            "prefix length " + std::to_string(prefix.size()) + " reaches the response cap");
    diff::Tape tape;
    ParamBinder p(tape, params);
    const Encoding e = encode_context(p, ex, s);
    Sequence inputs{Vocab::bos};
    inputs.insert(inputs.end(), prefix.begin(), prefix.end());
    const ResponsePlan r = plan_response(p, inputs, {});
    const MemoryPlan m = plan_memory(p, r, e);
    const Tensor logits = step_logits(p, r, m, as_row(tape, z)).value();
    const auto row = logits.row(logits.rows() - 1);
    return {row.begin(), row.end()};
}

} // namespace spi
