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

#include <optional>
#include <string>

#include "json.hpp"

#include "spi/learning/trainer.hpp"

namespace spi {

namespace detail {

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

} // namespace detail

/// One epoch of the training log.
inline nlohmann::ordered_json to_json(const EpochMetrics& m) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["surrogate_loss"] = m.surrogate_loss;
    j["ce_loss"] = m.ce_loss;
    j["posterior_agreement"] = m.posterior_agreement;
    j["valid_loss"] = detail::optional_json(m.valid_loss);
    j["valid_prior"] = detail::optional_json(m.valid_prior);
    j["valid_reconstruction"] = detail::optional_json(m.valid_reconstruction);
    j["selection_accuracy"] = detail::optional_json(m.selection_accuracy);
    return j;
}

inline std::string metrics_line(const EpochMetrics& m) { return to_json(m).dump(); }

} // namespace spi
