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
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "spi/inference/config.hpp"
#include "spi/model/model.hpp"
#include "spi/random.hpp"

namespace spi {

/// log Σ exp(v), shifted by the maximum.
inline double log_sum_exp(const std::vector<double>& v) {
    require(!v.empty(), "log-sum-exp of an empty list");
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) {
        return m;
    }
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

/// v - logsumexp(v): log-probabilities of the normalized distribution.
inline std::vector<double> normalize_log_weights(std::vector<double> v) {
    const double lz = log_sum_exp(v);
    for (auto& x : v) {
        x -= lz;
    }
    return v;
}

struct SelectionOutcome {
    std::size_t chosen = 0;
    std::vector<std::size_t> evaluated;   // candidate indices, increasing
    std::vector<double> log_weights;      // normalized posterior log-weights, aligned with `evaluated`
    std::vector<double> log_likelihoods;  // log p_β(R | C_i, z = μ_i), aligned with `evaluated`
};

struct SelectionRequest {
    SelectionMode mode = SelectionMode::greedy;
    /// Uniform prior only: restrict to the initializer's top-S. Absent means all M candidates.
    std::optional<std::size_t> top_s;
    double temperature = 1.0;
    /// Greedy ties go to the lowest index. Flipping this exists only for negative-control tests.
    bool ties_to_highest = false;
};

/// Every per-candidate quantity the selectors need, from one shared forward pass.
///
/// Encodings of all M contexts and the teacher-forced decoder states are computed once;
/// only the attention memory is rebuilt per evaluated candidate.
class CandidateScorer {
public:
    CandidateScorer(const ModelParams& params, const DialogueExample& ex)
        : params_(params), example_(ex), binder_(tape_, params) {
        encodings_ = encode_all(binder_, ex);
    }

    [[nodiscard]] std::size_t size() const noexcept { return encodings_.size(); }

    /// f_γ(C_i) (uniform prior) or f_{α1}(C_i) (learnable prior), pre-sigmoid.
    [[nodiscard]] std::vector<double> prior_scores() {
        const char* head = params_.config().prior == PriorMode::uniform ? "init" : "prior_s";
        std::vector<double> out;
        for (const auto& e : encodings_) {
            out.push_back(selection_score(binder_, head, e).value().item());
        }
        return out;
    }

    [[nodiscard]] Tensor mean(std::size_t i) {
        return latent_mean(binder_, encodings_.at(i)).value().reshaped(Shape{params_.config().latent});
    }

    /// log p_β(R | C_i, z = μ_i): the point-mass approximation of the z integral.
    [[nodiscard]] double log_likelihood_at_mean(std::size_t i) {
        if (!response_) {
            response_ = plan_teacher_forced(binder_, example_.response);
        }
        const Encoding& e = encodings_.at(i);
        const MemoryPlan m = plan_memory(binder_, *response_, e);
        return response_log_prob(binder_, *response_, m, latent_mean(binder_, e)).value().item();
    }

private:
    const ModelParams& params_;
    const DialogueExample& example_;
    diff::Tape tape_;
    ParamBinder binder_;
    std::vector<Encoding> encodings_;
    std::optional<ResponsePlan> response_;
};

/// Draw an index from normalized log-probabilities.
inline std::size_t sample_index(const std::vector<double>& log_probs, Rng& rng) {
    const double r = uniform_unit(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < log_probs.size(); ++i) {
        acc += std::exp(log_probs[i]);
        if (r < acc) {
            return i;
        }
    }
    return log_probs.size() - 1;
}

/// Posterior knowledge selection under the point-mass approximation z = μ_i.
///
/// Uniform prior: weight_i ∝ p_β(R|C_i, μ_i) over the top-S set of the initializer (or all M).
/// Learnable prior: weight_i ∝ exp(f_{α1}(C_i))·p_β(R|C_i, μ_i) over all M.
inline SelectionOutcome select_knowledge(CandidateScorer& scorer, PriorMode prior, const SelectionRequest& req,
                                         Rng* rng = nullptr) {
    const std::size_t M = scorer.size();
    SelectionOutcome out;
    std::vector<double> prior_logits;
    if (prior == PriorMode::learnable) {
        require(!req.top_s, "top-S restriction applies only to the uniform prior");
        out.evaluated.resize(M);
        std::iota(out.evaluated.begin(), out.evaluated.end(), 0);
        prior_logits = scorer.prior_scores();
    } else if (req.top_s) {
        require(*req.top_s <= M, "top-S " + std::to_string(*req.top_s) + " exceeds " + std::to_string(M) +
                                     " candidates");
        out.evaluated = top_s(scorer.prior_scores(), *req.top_s);
    } else {
        out.evaluated.resize(M);
        std::iota(out.evaluated.begin(), out.evaluated.end(), 0);
    }
    require(!out.evaluated.empty(), "selection over an empty candidate set");

    std::vector<double> scores;
    for (std::size_t i : out.evaluated) {
        const double ll = scorer.log_likelihood_at_mean(i);
        out.log_likelihoods.push_back(ll);
        scores.push_back(prior == PriorMode::learnable ? ll + prior_logits[i] : ll);
    }
    out.log_weights = normalize_log_weights(scores);

    std::size_t pick = 0;
    if (req.mode == SelectionMode::greedy) {
        pick = argmax(scores);
        if (req.ties_to_highest) {
            for (std::size_t i = scores.size(); i-- > pick + 1;) {
                if (scores[i] == scores[pick]) {
                    pick = i;
                    break;
                }
            }
        }
    } else {
        require(rng != nullptr, "sampled selection needs a random generator");
        require(req.temperature > 0.0, "selection temperature must be positive");
        std::vector<double> tempered = scores;
        for (auto& v : tempered) {
            v /= req.temperature;
        }
        pick = sample_index(normalize_log_weights(tempered), *rng);
    }
    out.chosen = out.evaluated[pick];
    return out;
}

inline SelectionOutcome select_knowledge(const ModelParams& params, const DialogueExample& ex,
                                         const SelectionRequest& req, Rng* rng = nullptr) {
    CandidateScorer scorer(params, ex);
    return select_knowledge(scorer, params.config().prior, req, rng);
}

} // namespace spi
