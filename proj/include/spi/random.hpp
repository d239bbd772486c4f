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
#include <cstdint>
#include <random>

namespace spi {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; mixes a base seed with stream coordinates into an independent seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return mix_seed(mix_seed(mix_seed(base) ^ a) ^ b);
}

/// Uniform draw from [0, n) by multiply-shift; identical across standard libraries.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

/// Uniform draw from [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal draw by Box-Muller, consuming two words per call.
inline double standard_normal(Rng& rng) {
    const double u1 = 1.0 - uniform_unit(rng);  // (0, 1]
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

} // namespace spi
