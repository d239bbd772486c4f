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
#include <cstdint>
#include <optional>

#include "spi/inference/config.hpp"
#include "spi/inference/langevin.hpp"
#include "spi/inference/selection.hpp"

namespace spi {

struct LatentPair {
    std::size_t s = 0;
    Tensor z;

    friend bool operator==(const LatentPair&, const LatentPair&) = default;
};

struct PosteriorSample {
    LatentPair latents;
    SelectionOutcome selection;
    LangevinTrace trace;
};

/// Selection request implied by an inference config and a context with M candidates.
inline SelectionRequest selection_request(const SpiConfig& cfg, PriorMode prior, std::size_t m) {
    SelectionRequest req;
    req.mode = cfg.selection;
    req.temperature = cfg.temperature;
    if (prior == PriorMode::uniform) {
        req.top_s = std::min(cfg.top_s, m);
    }
    return req;
}

/// Select s first (posterior over candidates at z = μ), then run short-run Langevin for z given s.
inline PosteriorSample infer_posterior(const ModelParams& params, const DialogueExample& ex, const SpiConfig& cfg,
                                       std::uint64_t seed) {
    cfg.validate();
    Rng select_rng(derive_seed(seed, 1));
    PosteriorSample out;
    {
        CandidateScorer scorer(params, ex);
        out.selection =
            select_knowledge(scorer, params.config().prior,
                             selection_request(cfg, params.config().prior, ex.candidates.size()), &select_rng);
    }
    out.trace = langevin_infer_z(params, ex, out.selection.chosen, cfg.langevin_steps, cfg.step_size,
                                 derive_seed(seed, 2), cfg.langevin_noise, cfg.grad_clamp);
    out.latents = {out.selection.chosen, out.trace.final_state()};
    return out;
}

inline LatentPair sequential_posterior_infer(const ModelParams& params, const DialogueExample& ex,
                                             const SpiConfig& cfg, std::uint64_t seed) {
    return infer_posterior(params, ex, cfg, seed).latents;
}

} // namespace spi
