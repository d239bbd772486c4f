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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "spi/inference/posterior.hpp"
#include "spi/verify.hpp"

using namespace spi;

namespace {

DialogueExample example(std::size_t m) {
    Rng rng(42 + m);
    return verify::random_example(rng, 12, m, 4);
}

ModelParams params(PriorMode prior = PriorMode::uniform, std::uint64_t seed = 5) {
    return verify::random_params(verify::tiny_config(12, prior), seed);
}

// Decoder blind to z and latent prior mean fixed to e1.
ModelParams z_blind_with_unit_mean() {
    ModelParams p = params();
    p.mut("dec.z_proj").fill(0.0);
    p.mut("dec.z_bias").fill(0.0);
    p.zero(Head::latent_prior);
    p.mut("prior_z.b")[0] = 1.0;
    return p;
}

double dist(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

} // namespace

TEST(Weights, GapOfLogThreeGivesThreeToOne) {
    const auto w = normalize_log_weights({0.0, -std::log(3.0)});
    EXPECT_NEAR(std::exp(w[0]), 0.75, 1e-12);
    EXPECT_NEAR(std::exp(w[1]), 0.25, 1e-12);
}

TEST(Weights, ShiftInvariant) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(1 + uniform_index(rng, 6));
        for (auto& x : v) x = 20.0 * standard_normal(rng);
        const double c = 500.0 * standard_normal(rng);
        auto shifted = v;
        for (auto& x : shifted) x += c;
        const auto a = normalize_log_weights(v), b = normalize_log_weights(shifted);
        double total = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            EXPECT_NEAR(a[i], b[i], 1e-9);
            total += std::exp(a[i]);
        }
        EXPECT_NEAR(total, 1.0, 1e-10);
    }
}

TEST(Selection, IdenticalCandidatesTieToIndexZero) {
    const ModelParams p = params();
    DialogueExample ex = example(3);
    ex.candidates = {ex.candidates[0], ex.candidates[0], ex.candidates[0]};
    const SelectionOutcome out = select_knowledge(p, ex, SelectionRequest{});
    EXPECT_EQ(out.chosen, 0u);
    ASSERT_EQ(out.evaluated, (std::vector<std::size_t>{0, 1, 2}));
    for (double lw : out.log_weights) EXPECT_NEAR(std::exp(lw), 1.0 / 3.0, 1e-12);
}

TEST(Selection, ChosenIsEvaluatedAndWeightsNormalize) {
    for (PriorMode prior : {PriorMode::uniform, PriorMode::learnable}) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const ModelParams p = params(prior, seed);
            const DialogueExample ex = example(4);
            SelectionRequest req;
            if (prior == PriorMode::uniform) req.top_s = 2;
            const auto out = select_knowledge(p, ex, req);
            EXPECT_NE(std::find(out.evaluated.begin(), out.evaluated.end(), out.chosen), out.evaluated.end());
            double total = 0.0;
            for (double lw : out.log_weights) total += std::exp(lw);
            EXPECT_NEAR(total, 1.0, 1e-10);
        }
    }
}

TEST(Selection, TopSContractErrors) {
    SelectionRequest req;
    req.top_s = 5;
    EXPECT_THROW(select_knowledge(params(), example(3), req), ContractError);
    req.top_s = 2;
    EXPECT_THROW(select_knowledge(params(PriorMode::learnable), example(3), req), ContractError);
}

TEST(Selection, SampledModeIsSeededAndFollowsWeights) {
    const ModelParams p = params();
    const DialogueExample ex = example(3);
    SelectionRequest req;
    req.mode = SelectionMode::sampled;
    Rng a(9), b(9);
    for (int i = 0; i < 20; ++i) {
        EXPECT_EQ(select_knowledge(p, ex, req, &a).chosen, select_knowledge(p, ex, req, &b).chosen);
    }
    EXPECT_THROW(select_knowledge(p, ex, req, nullptr), ContractError);

    const std::vector<double> lw = normalize_log_weights({0.0, -std::log(3.0)});
    Rng rng(1);
    int zeros = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) zeros += sample_index(lw, rng) == 0;
    EXPECT_NEAR(zeros / double(n), 0.75, 0.015);
}

TEST(Langevin, ZeroStepsNoNoiseIsPriorMean) {
    const ModelParams p = params();
    const DialogueExample ex = example(3);
    const auto trace = langevin_infer_z(p, ex, 1, 0, 0.1, 7, false);
    ASSERT_EQ(trace.states.size(), 1u);
    EXPECT_EQ(trace.states[0], latent_prior_mean(p, ex, 1));
}

TEST(Langevin, OneDriftStepTowardMean) {
    const ModelParams p = z_blind_with_unit_mean();
    const DialogueExample ex = example(2);
    ResponseLatentGradient grad(p, ex, 0);
    const Tensor& mu = grad.prior_mean();
    ASSERT_EQ(mu[0], 1.0);
    Rng rng(1);
    const auto trace = langevin_chain(mu, Tensor(Shape{mu.size()}), [&](const Tensor& z) { return grad(z).second; },
                                      LangevinSettings{1, 0.1, false, 100.0}, rng);
    ASSERT_EQ(trace.states.size(), 2u);
    EXPECT_NEAR(trace.states[1][0], 0.1, 1e-15);
    for (std::size_t i = 1; i < mu.size(); ++i) EXPECT_EQ(trace.states[1][i], 0.0);
}

TEST(Langevin, NoiseFreeChainContractsTowardMean) {
    const ModelParams p = z_blind_with_unit_mean();
    const DialogueExample ex = example(2);
    ResponseLatentGradient grad(p, ex, 1);
    const Tensor& mu = grad.prior_mean();
    Tensor z0(Shape{mu.size()}, -2.0);
    Rng rng(1);
    const auto trace = langevin_chain(mu, z0, [&](const Tensor& z) { return grad(z).second; },
                                      LangevinSettings{30, 0.1, false, 100.0}, rng);
    for (std::size_t t = 1; t < trace.states.size(); ++t) {
        EXPECT_NEAR(dist(trace.states[t], mu), 0.9 * dist(trace.states[t - 1], mu), 1e-12);
    }
}

TEST(Langevin, ZeroStepSizeWithoutNoiseIsFrozen) {
    const ModelParams p = params();
    const DialogueExample ex = example(3);
    const auto trace = langevin_infer_z(p, ex, 2, 6, 0.0, 3, false);
    ASSERT_EQ(trace.states.size(), 7u);
    for (const auto& z : trace.states) EXPECT_EQ(z, trace.states[0]);
}

TEST(Langevin, NonFiniteStateNamesTheStep) {
    const Tensor mu(Shape{2});
    Rng rng(1);
    int calls = 0;
    auto grad = [&](const Tensor& z) {
        Tensor g(Shape{z.size()});
        if (++calls == 3) g[1] = std::numeric_limits<double>::infinity();
        return g;
    };
    const LangevinSettings cfg{5, 0.1, false, std::numeric_limits<double>::infinity()};
    try {
        langevin_chain(mu, mu, grad, cfg, rng);
        FAIL() << "expected a numeric error";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step 3"), std::string::npos) << e.what();
    }
}

TEST(Langevin, GradientIsClampedElementwise) {
    const Tensor mu(Shape{2});
    Rng rng(1);
    auto grad = [](const Tensor&) { return Tensor::vector({1e9, -1e9}); };
    const auto trace = langevin_chain(mu, mu, grad, LangevinSettings{1, 0.1, false, 100.0}, rng);
    EXPECT_NEAR(trace.states[1][0], 10.0, 1e-12);
    EXPECT_NEAR(trace.states[1][1], -10.0, 1e-12);
}

TEST(Langevin, MomentsMatchLinearGaussianPosterior) {
    const auto r = verify::langevin_moment_suite(10, 9);
    EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Posterior, SingleCandidateAlwaysSelected) {
    for (PriorMode prior : {PriorMode::uniform, PriorMode::learnable}) {
        const ModelParams p = params(prior);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            EXPECT_EQ(sequential_posterior_infer(p, example(1), SpiConfig{}, seed).s, 0u);
        }
    }
}

TEST(Posterior, NoStepsNoNoiseReturnsPriorMean) {
    const ModelParams p = params();
    const DialogueExample ex = example(4);
    SpiConfig cfg;
    cfg.langevin_steps = 0;
    cfg.langevin_noise = false;
    cfg.top_s = 3;
    const LatentPair lp = sequential_posterior_infer(p, ex, cfg, 1);
    EXPECT_EQ(lp.z, latent_prior_mean(p, ex, lp.s));
}

TEST(Posterior, SeededRunsAreBitIdentical) {
    const ModelParams p = params(PriorMode::learnable);
    const DialogueExample ex = example(4);
    SpiConfig cfg;
    cfg.selection = SelectionMode::sampled;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EXPECT_EQ(sequential_posterior_infer(p, ex, cfg, seed), sequential_posterior_infer(p, ex, cfg, seed));
    }
}

TEST(Posterior, GreedySelectionMatchesBruteForce) {
    const auto r = verify::selection_equivalence_suite(100);
    EXPECT_TRUE(r.passed) << r.detail;
    const auto broken = verify::selection_equivalence_suite(100, verify::Fault::tie_break);
    EXPECT_FALSE(broken.passed);
}

TEST(Posterior, FullTopSMatchesExhaustive) {
    const auto r = verify::top_s_consistency_suite(100);
    EXPECT_TRUE(r.passed) << r.detail;
}
