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
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spi/model/model.hpp"
#include "spi/random.hpp"

namespace spi {

struct LangevinTrace {
    std::vector<Tensor> states;        // z^0 .. z^T
    double step_size = 0.0;
    bool noise = true;
    std::vector<double> grad_norms;    // ‖drift gradient‖ at z^0 .. z^{T-1}

    [[nodiscard]] const Tensor& final_state() const { return states.back(); }
};

struct LangevinSettings {
    std::size_t steps = 5;
    double step_size = 0.1;
    bool noise = true;
    double grad_clamp = 100.0;
};

inline void clamp_elements(Tensor& g, double bound) {
    for (auto& v : g.data()) {
        v = std::clamp(v, -bound, bound);
    }
}

/// Short-run Langevin chain targeting N(z; μ, I)·exp(loglik(z)):
///   z^{t+1} = z^t + δ·[-(z^t - μ) + clamp(∇ loglik(z^t))] + sqrt(2δ)·ε_t.
/// `grad_loglik(z)` returns ∇_z of the likelihood term at z.
template <typename GradFn>
LangevinTrace langevin_chain(const Tensor& mu, Tensor z0, GradFn&& grad_loglik, const LangevinSettings& cfg,
                             Rng& rng) {
    require(cfg.step_size >= 0.0, "Langevin step size must be non-negative");
    require(z0.size() == mu.size(), "Langevin start and prior mean differ in dimension");
    LangevinTrace trace;
    trace.step_size = cfg.step_size;
    trace.noise = cfg.noise;
    trace.states.reserve(cfg.steps + 1);
    trace.states.push_back(std::move(z0));
    const double diffusion = std::sqrt(2.0 * cfg.step_size);
    for (std::size_t t = 0; t < cfg.steps; ++t) {
        const Tensor& z = trace.states.back();
        Tensor g = grad_loglik(z);
        require(g.size() == z.size(), "likelihood gradient has the wrong dimension");
        clamp_elements(g, cfg.grad_clamp);
        double norm2 = 0.0;
        Tensor next = z;
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double drift = -(z[i] - mu[i]) + g[i];
            norm2 += drift * drift;
            next[i] = z[i] + cfg.step_size * drift;
            if (cfg.noise) {
                next[i] += diffusion * standard_normal(rng);
            }
        }
        trace.grad_norms.push_back(std::sqrt(norm2));
        if (!next.all_finite()) {
            throw NumericError("Langevin state became non-finite at step " + std::to_string(t + 1));
        }
        trace.states.push_back(std::move(next));
    }
    return trace;
}

/// ∇_z log p_β(R | z, C_s) by reverse mode, with z-independent decoder work done once.
class ResponseLatentGradient {
public:
    ResponseLatentGradient(const ModelParams& params, const DialogueExample& ex, std::size_t s)
        : params_(params), binder_(tape_, params) {
        const Encoding e = encode_context(binder_, ex, s);
        mean_ = latent_mean(binder_, e).value().reshaped(Shape{params.config().latent});
        response_ = plan_teacher_forced(binder_, ex.response);
        memory_ = plan_memory(binder_, response_, e);
    }

    [[nodiscard]] const Tensor& prior_mean() const noexcept { return mean_; }

    /// log p_β(R | z, C_s) and its gradient in z.
    std::pair<double, Tensor> operator()(const Tensor& z) {
        check_latent(params_, z);
        Var zv = tape_.leaf("z", z.reshaped(Shape{1, z.size()}), true);
        Var lp = response_log_prob(binder_, response_, memory_, zv);
        tape_.backward(lp);
        return {lp.value().item(), tape_.grad(zv).reshaped(Shape{z.size()})};
    }

private:
    const ModelParams& params_;
    diff::Tape tape_;
    ParamBinder binder_;
    Tensor mean_;
    ResponsePlan response_;
    MemoryPlan memory_;
};

/// Short-run inference of z given the selected candidate s, started from the prior.
/// With noise off the chain starts at μ and is deterministic.
inline LangevinTrace langevin_infer_z(const ModelParams& params, const DialogueExample& ex, std::size_t s,
                                      std::size_t steps, double step_size, std::uint64_t seed, bool noise,
                                      double grad_clamp = 100.0) {
    require(s < ex.candidates.size(), "candidate index out of range");
    ResponseLatentGradient grad(params, ex, s);
    const Tensor& mu = grad.prior_mean();
    Rng rng(seed);
    Tensor z0 = mu;
    if (noise) {
        for (auto& v : z0.data()) {
            v += standard_normal(rng);
        }
    }
    LangevinSettings cfg{steps, step_size, noise, grad_clamp};
    return langevin_chain(mu, std::move(z0), [&](const Tensor& z) { return grad(z).second; }, cfg, rng);
}

/// Both z-gradient terms of log p(z, R | C_s), each by reverse mode: the latent prior and the decoder.
struct LatentGradientTerms {
    Tensor prior;
    Tensor decoder;
};

inline LatentGradientTerms latent_gradient_terms(const ModelParams& params, const DialogueExample& ex,
                                                 std::size_t s, const Tensor& z) {
    check_latent(params, z);
    LatentGradientTerms out;
    {
        diff::Tape tape;
        ParamBinder p(tape, params);
        const Encoding e = encode_context(p, ex, s);
        Var zv = tape.leaf("z", z.reshaped(Shape{1, z.size()}), true);
        Var lp = latent_log_density(zv, latent_mean(p, e));
        tape.backward(lp);
        out.prior = tape.grad(zv).reshaped(Shape{z.size()});
    }
    ResponseLatentGradient g(params, ex, s);
    out.decoder = g(z).second;
    return out;
}

} // namespace spi
