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
#include <string>

#include "spi/error.hpp"

namespace spi {

enum class SelectionMode { greedy, sampled };

inline const char* to_string(SelectionMode m) { return m == SelectionMode::greedy ? "greedy" : "sampled"; }

inline SelectionMode parse_selection_mode(const std::string& s) {
    if (s == "greedy") {
        return SelectionMode::greedy;
    }
    if (s == "sampled") {
        return SelectionMode::sampled;
    }
    throw ContractError("unknown selection mode '" + s + "' (expected greedy|sampled)");
}

/// Knobs of sequential posterior inference. The prior mode comes from the model itself.
struct SpiConfig {
    std::size_t top_s = 5;
    std::size_t langevin_steps = 5;
    double step_size = 0.1;
    SelectionMode selection = SelectionMode::greedy;
    /// Divides candidate log-weights before sampling; 1 is the exact posterior.
    double temperature = 1.0;
    /// Per-element bound on the decoder part of ∇_z.
    double grad_clamp = 100.0;
    bool langevin_noise = true;

    void validate() const {
        require(top_s >= 1, "top-S must be at least 1");
        require(step_size >= 0.0, "Langevin step size must be non-negative");
        require(temperature > 0.0, "selection temperature must be positive");
        require(grad_clamp > 0.0, "gradient clamp must be positive");
    }
};

} // namespace spi
