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
#include <exception>
#include <thread>
#include <vector>

namespace spi {

/// Run fn(i) for i in [0, n) on up to `threads` workers. Each index runs exactly once;
/// callers write results into per-index slots so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += threads) {
                        fn(i);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

} // namespace spi
