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

#include <cmath>
#include <cstddef>
#include <vector>

#include "spi/model/model.hpp"

namespace spi {

struct GenerationResult {
    std::size_t s = 0;
    Tensor z;                      // prior mean μ_s used for decoding
    Sequence tokens;               // ends with end-of-sequence
    std::vector<double> log_probs; // log-probability of each emitted token
};

/// Test-time knowledge choice: argmax over all M of the initializer (uniform prior)
/// or of the learnable prior. Never looks at the response.
inline std::size_t select_for_generation(const ModelParams& params, const DialogueExample& ex) {
    diff::Tape tape;
    ParamBinder p(tape, params);
    const char* head = params.config().prior == PriorMode::uniform ? "init" : "prior_s";
    std::vector<double> scores;
    for (const auto& e : encode_all(p, ex)) {
        scores.push_back(selection_score(p, head, e).value().item());
    }
    return argmax(scores);
}

/// Greedy response for the context (H, K). z is fixed to the prior mean of the chosen candidate;
/// the last position is forced to end-of-sequence when the cap is reached.
inline GenerationResult generate(const ModelParams& params, const DialogueExample& ex, std::size_t max_len = 32) {
    require(max_len >= 1, "generation length cap must be at least 1");
    require(!ex.candidates.empty(), "generation needs at least one knowledge candidate");
    const std::size_t cap = std::min(max_len, params.config().max_response);
    GenerationResult out;
    out.s = select_for_generation(params, ex);

    diff::Tape tape;
    ParamBinder p(tape, params);
    const Encoding e = encode_context(p, ex, out.s);
    Var mu = latent_mean(p, e);
    out.z = mu.value().reshaped(Shape{params.config().latent});

    Sequence inputs{Vocab::bos};
    while (out.tokens.size() < cap) {
        const ResponsePlan r = plan_response(p, inputs, {});
        const MemoryPlan m = plan_memory(p, r, e);
        Var lp = diff::log_softmax(step_logits(p, r, m, mu));
        const auto last = lp.value().row(lp.value().rows() - 1);
        std::size_t next = 0;
        if (out.tokens.size() + 1 == cap) {
            next = Vocab::eos;
        } else {
            for (std::size_t v = 1; v < last.size(); ++v) {
                if (last[v] > last[next]) {
                    next = v;
                }
            }
        }
        out.tokens.push_back(next);
        out.log_probs.push_back(last[next]);
        if (next == Vocab::eos) {
            break;
        }
        inputs.push_back(next);
    }
    return out;
}

} // namespace spi
