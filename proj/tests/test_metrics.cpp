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

#include <algorithm>
#include <cmath>
#include <set>

#include "bleu_reference.hpp"
#include "spi/data/synthetic.hpp"
#include "spi/metrics/evaluation.hpp"
#include "spi/verify.hpp"

using namespace spi;
using namespace spi::metrics;

namespace {

std::vector<Sequence> random_corpus(Rng& rng, std::size_t n, std::size_t max_len, std::size_t vocab) {
    std::vector<Sequence> out(n);
    for (auto& s : out) s = verify::random_tokens(rng, vocab, uniform_index(rng, max_len + 1));
    return out;
}

// ROUGE-n F1 by listing every n-gram occurrence and matching greedily.
double naive_rouge_pair(const Sequence& c, const Sequence& r, std::size_t n) {
    if (c.size() < n || r.size() < n) return 0.0;
    std::vector<Sequence> cg, rg;
    for (std::size_t i = 0; i + n <= c.size(); ++i) cg.emplace_back(c.begin() + i, c.begin() + i + n);
    for (std::size_t i = 0; i + n <= r.size(); ++i) rg.emplace_back(r.begin() + i, r.begin() + i + n);
    std::vector<bool> used(rg.size(), false);
    double overlap = 0.0;
    for (const auto& g : cg) {
        for (std::size_t j = 0; j < rg.size(); ++j) {
            if (!used[j] && rg[j] == g) {
                used[j] = true;
                overlap += 1.0;
                break;
            }
        }
    }
    if (overlap == 0.0) return 0.0;
    const double p = overlap / cg.size(), rec = overlap / rg.size();
    return 2.0 * p * rec / (p + rec);
}

const oracle::HandCorpus hand;

} // namespace

TEST(Accuracy, TrivialCases) {
    EXPECT_EQ(selection_accuracy({0, 1, 2}, {0, 1, 2}), 1.0);
    EXPECT_EQ(selection_accuracy({0, 1}, {1, 1}), 0.5);
    EXPECT_THROW(selection_accuracy({0}, {0, 1}), ContractError);
    EXPECT_THROW(selection_accuracy({}, {}), ContractError);
}

TEST(Accuracy, RandomGuessesOverEightCandidates) {
    Rng rng(2026);
    std::vector<std::size_t> pred(10000), gold(10000);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred[i] = uniform_index(rng, 8);
        gold[i] = uniform_index(rng, 8);
    }
    EXPECT_NEAR(selection_accuracy(pred, gold), 0.125, 0.01);
}

TEST(Bleu, IdenticalCorpusScoresOne) {
    const std::vector<Sequence> c{{5, 6, 7, 8}, {9, 10, 11, 12, 13}};
    EXPECT_DOUBLE_EQ(bleu_n(c, c, 4), 1.0);
    EXPECT_DOUBLE_EQ(bleu_n(c, c, 3), 1.0);
}

TEST(Bleu, DisjointCorpusStaysAtSmoothingFloor) {
    const std::vector<Sequence> c{{5, 6, 7, 8}}, r{{9, 10, 11, 12}};
    const double floor = std::pow((1.0 / 5.0) * (1.0 / 4.0) * (1.0 / 3.0) * (1.0 / 2.0), 0.25);
    EXPECT_NEAR(bleu_n(c, r, 4), floor, 1e-15);
    EXPECT_GT(bleu_n({{5, 6, 7, 8}}, {{5, 10, 11, 12}}, 4), bleu_n(c, r, 4));
}

TEST(Bleu, HandWorkedCorpus) {
    EXPECT_NEAR(hand.bleu3, 0.5852509435292458, 1e-15);
    EXPECT_NEAR(hand.bleu4, 0.49278170478117156, 1e-15);
    EXPECT_NEAR(bleu_n(hand.hyps, hand.refs, 3), hand.bleu3, 1e-9);
    EXPECT_NEAR(bleu_n(hand.hyps, hand.refs, 4), hand.bleu4, 1e-9);
    EXPECT_NEAR(oracle::reference_bleu(hand.hyps, hand.refs, 4), hand.bleu4, 1e-12);
}

TEST(Bleu, AgreesWithReferenceOnRandomCorpora) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 5);
        auto hyps = random_corpus(rng, n, 7, 9), refs = random_corpus(rng, n, 7, 9);
        hyps[0].push_back(5);
        for (int order : {1, 2, 3, 4}) {
            const double b = bleu_n(hyps, refs, order);
            EXPECT_NEAR(b, oracle::reference_bleu(hyps, refs, order), 1e-12);
            EXPECT_GE(b, 0.0);
            EXPECT_LE(b, 1.0);
        }
    }
}

TEST(Bleu, ContractErrors) {
    EXPECT_THROW(bleu_n({}, {}, 4), ContractError);
    EXPECT_THROW(bleu_n({{5}}, {{5}, {6}}, 4), ContractError);
    EXPECT_THROW(bleu_n({{5}}, {{5}}, 5), ContractError);
    EXPECT_EQ(bleu_n({{}}, {{5}}, 2), 0.0);
}

TEST(Rouge, TrivialCases) {
    EXPECT_EQ(rouge_n({{5, 6, 7}}, {{5, 6, 7}}, 1), 1.0);
    EXPECT_EQ(rouge_n({{5, 6, 7}}, {{5, 6, 7}}, 2), 1.0);
    EXPECT_NEAR(rouge_n_pair({5, 6, 8, 9}, {5, 6}, 1), 2.0 / 3.0, 1e-15);
    EXPECT_EQ(rouge_n_pair({}, {5}, 1), 0.0);
    EXPECT_EQ(rouge_n_pair({5}, {6}, 1), 0.0);
}

TEST(Rouge, MatchesGreedyEnumeration) {
    Rng rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        const Sequence c = verify::random_tokens(rng, 8, uniform_index(rng, 7));
        const Sequence r = verify::random_tokens(rng, 8, uniform_index(rng, 7));
        for (std::size_t n : {1u, 2u}) {
            const double v = rouge_n_pair(c, r, n);
            EXPECT_NEAR(v, naive_rouge_pair(c, r, n), 1e-15);
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Distinct, TrivialCases) {
    EXPECT_EQ(distinct_n({{5, 5}, {5, 6}}, 1), 0.5);
    EXPECT_EQ(distinct_n({{7}, {7}, {7}, {7}}, 1), 0.25);
    EXPECT_EQ(distinct_n({{5, 6}, {7, 8}}, 1), 1.0);
    EXPECT_EQ(distinct_n({{5, 6}, {7, 8}}, 2), 1.0);
    EXPECT_EQ(distinct_n({{5}, {6}}, 2), 0.0);
}

TEST(Metrics, PermutationInvariant) {
    Rng rng(13);
    auto hyps = random_corpus(rng, 12, 8, 10), refs = random_corpus(rng, 12, 8, 10);
    hyps[0].push_back(4);
    const double b = bleu_n(hyps, refs, 4), r1 = rouge_n(hyps, refs, 1), d2 = distinct_n(hyps, 2);
    std::vector<std::size_t> order(hyps.size());
    std::iota(order.begin(), order.end(), 0);
    std::reverse(order.begin(), order.end());
    std::rotate(order.begin(), order.begin() + 5, order.end());
    std::vector<Sequence> h2, r2;
    for (auto i : order) {
        h2.push_back(hyps[i]);
        r2.push_back(refs[i]);
    }
    EXPECT_EQ(bleu_n(h2, r2, 4), b);
    EXPECT_NEAR(rouge_n(h2, r2, 1), r1, 1e-15);
    EXPECT_EQ(distinct_n(h2, 2), d2);
}

TEST(Perplexity, ZeroDecoderOverEightTokensIsEight) {
    ModelParams p = verify::random_params(verify::tiny_config(8, PriorMode::uniform), 3);
    p.zero(Head::decoder);
    Rng rng(4);
    std::vector<DialogueExample> corpus;
    for (int i = 0; i < 5; ++i) corpus.push_back(verify::random_example(rng, 8, 3, 5));
    EXPECT_NEAR(perplexity(p, corpus), 8.0, 1e-12);
    EXPECT_NEAR(perplexity(p, corpus, {true, 1}), 8.0, 1e-12);
    EXPECT_THROW(perplexity(p, {}), ContractError);
}

TEST(Perplexity, OrderAndThreadInvariantAndAtLeastOne) {
    const ModelParams p = verify::random_params(verify::tiny_config(10, PriorMode::learnable), 6);
    Rng rng(6);
    std::vector<DialogueExample> corpus;
    for (int i = 0; i < 20; ++i) corpus.push_back(verify::random_example(rng, 10, 3, 5));
    const double base = perplexity(p, corpus);
    EXPECT_GE(base, 1.0);
    EXPECT_EQ(perplexity(p, corpus, {false, 4}), base);
    std::reverse(corpus.begin(), corpus.end());
    EXPECT_NEAR(perplexity(p, corpus), base, 1e-12);
}

TEST(Evaluation, UntrainedSelectorIsAtChance) {
    data::SyntheticSpec spec;
    spec.train = 1;
    spec.valid = 1;
    spec.test = 1000;
    const auto test = data::generate_corpus(spec).test;
    ModelConfig mc;
    mc.embed = 8;
    mc.hidden = 12;
    mc.latent = 4;
    const Evaluation ev = evaluate(ModelParams::initialize(mc, 1), test);
    EXPECT_NEAR(ev.report.accuracy, 1.0 / 8.0, 0.05);
    EXPECT_EQ(ev.report.examples, 1000u);
    for (double v : {ev.report.bleu3, ev.report.bleu4, ev.report.rouge1, ev.report.rouge2, ev.report.distinct1,
                     ev.report.distinct2}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_GE(ev.report.perplexity, 1.0);
}

TEST(Evaluation, ReportFormats) {
    EvalReport r;
    r.accuracy = 0.5;
    r.examples = 2;
    const auto j = r.to_json();
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    EXPECT_EQ(keys, (std::vector<std::string>{"accuracy", "perplexity", "bleu3", "bleu4", "rouge1", "rouge2",
                                              "distinct1", "distinct2", "examples", "tokens", "oracle_knowledge"}));
    EXPECT_EQ(r.to_tsv().substr(0, 9), "accuracy\t");
    EXPECT_EQ(content_tokens({5, 6, Vocab::eos, 7}), (Sequence{5, 6}));
}
