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

#include "spi/generation.hpp"
#include "spi/verify.hpp"

using namespace spi;

namespace {

ModelParams params(PriorMode prior, std::uint64_t seed) {
    return verify::random_params(verify::tiny_config(12, prior), seed);
}

DialogueExample example(std::uint64_t seed, std::size_t m = 3) {
    Rng rng(seed);
    return verify::random_example(rng, 12, m, 4);
}

} // namespace

TEST(Generation, EndsWithEosWithinCapAndLogProbsNonPositive) {
    for (PriorMode prior : {PriorMode::uniform, PriorMode::learnable}) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const ModelParams p = params(prior, seed);
            for (std::size_t cap : {1u, 3u, 32u}) {
                const GenerationResult g = generate(p, example(seed), cap);
                ASSERT_FALSE(g.tokens.empty());
                EXPECT_LE(g.tokens.size(), std::min(cap, p.config().max_response));
                EXPECT_EQ(g.tokens.back(), Vocab::eos);
                EXPECT_EQ(std::count(g.tokens.begin(), g.tokens.end(), Vocab::eos), 1);
                ASSERT_EQ(g.log_probs.size(), g.tokens.size());
                for (double lp : g.log_probs) EXPECT_LE(lp, 0.0);
            }
        }
    }
}

TEST(Generation, ZeroCapIsRejected) {
    EXPECT_THROW(generate(params(PriorMode::uniform, 1), example(1), 0), ContractError);
}

TEST(Generation, ResponseFieldIsNeverRead) {
    const ModelParams p = params(PriorMode::learnable, 3);
    DialogueExample ex = example(4);
    const GenerationResult a = generate(p, ex);
    ex.response = {5, 6, 7, 8, Vocab::eos};
    ex.gold_index = 2;
    const GenerationResult b = generate(p, ex);
    EXPECT_EQ(a.s, b.s);
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.log_probs, b.log_probs);
}

TEST(Generation, SingleCandidateSelectsZero) {
    for (PriorMode prior : {PriorMode::uniform, PriorMode::learnable}) {
        EXPECT_EQ(generate(params(prior, 2), example(5, 1)).s, 0u);
    }
}

TEST(Generation, KnowledgeChoiceIsArgmaxOfTestTimeScores) {
    EXPECT_EQ(argmax({0.9, 0.1, 0.1}), 0u);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const DialogueExample ex = example(seed + 20, 4);
        const ModelParams u = params(PriorMode::uniform, seed);
        EXPECT_EQ(generate(u, ex).s, argmax(initializer_scores(u, ex)));
        const ModelParams l = params(PriorMode::learnable, seed);
        EXPECT_EQ(generate(l, ex).s, argmax(knowledge_prior_logits(l, ex)));
    }
}

TEST(Generation, GreedyStepMatchesDecodeStepArgmax) {
    const ModelParams p = params(PriorMode::uniform, 6);
    const DialogueExample ex = example(6);
    const GenerationResult g = generate(p, ex, 6);
    Sequence prefix;
    for (std::size_t i = 0; i + 1 < g.tokens.size(); ++i) {
        const auto logits = decode_step(p, g.s, g.z, ex, prefix);
        EXPECT_EQ(argmax(logits), g.tokens[i]);
        EXPECT_NEAR(logits[g.tokens[i]] - log_sum_exp(logits), g.log_probs[i], 1e-12);
        prefix.push_back(g.tokens[i]);
    }
}

TEST(Generation, ConstantLogitShiftKeepsTokens) {
    ModelParams p = params(PriorMode::uniform, 7);
    const DialogueExample ex = example(7);
    const GenerationResult a = generate(p, ex);
    for (auto& v : p.mut("dec.out_b").data()) v += 3.25;
    const GenerationResult b = generate(p, ex);
    EXPECT_EQ(a.tokens, b.tokens);
    for (std::size_t i = 0; i < a.log_probs.size(); ++i) EXPECT_NEAR(a.log_probs[i], b.log_probs[i], 1e-12);
}
