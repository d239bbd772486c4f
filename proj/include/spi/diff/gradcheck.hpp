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
#include <sstream>
#include <string>
#include <vector>

#include "spi/diff/ops.hpp"
#include "spi/diff/tape.hpp"

namespace spi::diff {

struct GradcheckReport {
    std::vector<double> analytic;
    std::vector<double> numeric;
    std::vector<double> rel_error;
    double max_rel_error = 0.0;
    std::size_t worst = 0;
    double tolerance = 0.0;
    bool passed = true;

    [[nodiscard]] std::string describe() const {
        std::ostringstream out;
        out << (passed ? "pass" : "FAIL") << ": max relative error " << max_rel_error << " at coordinate " << worst;
        if (!analytic.empty()) {
            out << " (analytic " << analytic[worst] << ", numeric " << numeric[worst] << ")";
        }
        out << ", tolerance " << tolerance;
        return out.str();
    }
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero coordinates from amplifying
/// finite-difference noise into spurious failures.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compare the tape gradient of a scalar function against central differences.
/// `fn(tape, x)` must build a scalar on `tape` from the leaf `x`.
template <typename Fn>
GradcheckReport gradcheck(Fn&& fn, const Tensor& point, double h, double tol, double floor = 1e-3) {
    if (!(h > 0.0)) {
        throw ContractError("gradcheck step must be positive");
    }
    GradcheckReport report;
    report.tolerance = tol;
    {
        Tape tape;
        Var x = tape.leaf("x", point, true);
        Var y = fn(tape, x);
        tape.backward(y);
        report.analytic = tape.grad(x).values();
    }
    auto eval = [&](const Tensor& at) {
        Tape tape;
        Var x = tape.leaf("x", at, false);
        const double v = fn(tape, x).value().item();
        if (!std::isfinite(v)) {
            throw NumericError("gradcheck: function is non-finite near the point");
        }
        return v;
    };
    report.numeric.resize(point.size());
    report.rel_error.resize(point.size());
    Tensor probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        probe[i] = point[i] + h;
        const double up = eval(probe);
        probe[i] = point[i] - h;
        const double down = eval(probe);
        probe[i] = point[i];
        report.numeric[i] = (up - down) / (2.0 * h);
        report.rel_error[i] = relative_error(report.analytic[i], report.numeric[i], floor);
        if (report.rel_error[i] > report.max_rel_error) {
            report.max_rel_error = report.rel_error[i];
            report.worst = i;
        }
    }
    report.passed = report.max_rel_error <= tol;
    return report;
}

} // namespace spi::diff
