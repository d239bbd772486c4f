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

#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "spi/data/corpus.hpp"
#include "spi/data/synthetic.hpp"

using namespace spi;
using namespace spi::data;

namespace {

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.train = 300;
    s.valid = 50;
    s.test = 50;
    return s;
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("spi_test_data_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST(SyntheticSpec, InfeasibleSpecsAreRejected) {
    SyntheticSpec s;
    s.vocab = 4;
    EXPECT_THROW(generate_corpus(s), ContractError);
    s = SyntheticSpec{};
    s.styles = 0;
    EXPECT_THROW(generate_corpus(s), ContractError);
    s = SyntheticSpec{};
    s.rho = 1.5;
    EXPECT_THROW(generate_corpus(s), ContractError);
    s = SyntheticSpec{};
    s.vocab = s.first_content() + s.candidate_length + s.key_length - 1;
    EXPECT_THROW(generate_corpus(s), ContractError);
    s.vocab += 1;
    EXPECT_NO_THROW(generate_corpus(s));
}

TEST(SyntheticCorpus, PureFunctionOfSpec) {
    const SyntheticSpec s = small_spec();
    const auto a = generate_corpus(s), b = generate_corpus(s);
    EXPECT_EQ(serialize_corpus(a.train), serialize_corpus(b.train));
    EXPECT_EQ(serialize_corpus(a.valid), serialize_corpus(b.valid));
    EXPECT_EQ(serialize_corpus(a.test), serialize_corpus(b.test));
    SyntheticSpec other = s;
    other.seed = 2;
    EXPECT_NE(serialize_corpus(generate_corpus(other).train), serialize_corpus(a.train));
}

TEST(SyntheticCorpus, ExamplesAreValidAndShaped) {
    const SyntheticSpec s = small_spec();
    const auto c = generate_corpus(s);
    EXPECT_EQ(c.train.size(), 300u);
    for (const auto& ex : c.train) {
        validate(ex, s.vocab);
        ASSERT_EQ(ex.candidates.size(), s.candidates);
        ASSERT_TRUE(ex.gold_index);
        const Sequence& gold = ex.candidates[*ex.gold_index];
        EXPECT_EQ(ex.history, Sequence(gold.begin(), gold.begin() + 2));
        for (const auto& k : ex.candidates) EXPECT_EQ(k.size(), s.candidate_length);
    }
}

TEST(SyntheticCorpus, GoldIsTheOnlySourceOfTheResponse) {
    const SyntheticSpec s;
    const auto c = generate_corpus(s);
    std::size_t hits = 0;
    for (const auto& ex : c.train) {
        std::size_t sources = 0;
        for (std::size_t i = 0; i < ex.candidates.size(); ++i) {
            for (std::size_t g = 0; g < s.styles; ++g) sources += apply_template(s, g, ex.candidates[i]) == ex.response;
        }
        EXPECT_EQ(sources, 1u);
        hits += oracle_select(s, ex) == ex.gold_index;
    }
    EXPECT_EQ(hits, c.train.size());
}

TEST(SyntheticCorpus, TestTopicsAreHeldOut) {
    const auto c = generate_corpus(small_spec());
    const SyntheticSpec s = small_spec();
    std::set<Token> seen;
    for (const auto* split : {&c.train, &c.valid}) {
        for (const auto& ex : *split) {
            EXPECT_FALSE(s.is_test_topic(ex.history[0]));
            seen.insert(ex.history[0]);
        }
    }
    for (const auto& ex : c.test) {
        EXPECT_TRUE(s.is_test_topic(ex.history[0]));
        EXPECT_EQ(seen.count(ex.history[0]), 0u);
    }
}

TEST(SyntheticCorpus, GoldPositionAndStylesAreSpread) {
    const SyntheticSpec s;
    const auto c = generate_corpus(s);
    std::vector<std::size_t> pos(s.candidates), style(s.styles);
    for (const auto& ex : c.train) {
        ++pos[*ex.gold_index];
        ++style[ex.response[0] == 4 ? 0 : ex.response[0] == 6 ? 1 : 2];
    }
    for (auto n : pos) EXPECT_NEAR(n / 2000.0, 1.0 / 8.0, 0.03);
    for (auto n : style) EXPECT_NEAR(n / 2000.0, 1.0 / 3.0, 0.04);
}

TEST(SyntheticCorpus, NoSimilarityMeansNoSharedPositions) {
    SyntheticSpec s = small_spec();
    s.rho = 0.0;
    s.styles = 1;
    for (const auto& ex : generate_corpus(s).train) {
        const Sequence& gold = ex.candidates[*ex.gold_index];
        EXPECT_EQ(ex.response, apply_template(s, 0, gold));
        for (std::size_t i = 0; i < ex.candidates.size(); ++i) {
            if (i == *ex.gold_index) continue;
            for (std::size_t j = 0; j < gold.size(); ++j) EXPECT_NE(ex.candidates[i][j], gold[j]);
        }
        EXPECT_EQ(oracle_select(s, ex), ex.gold_index);
    }
}

TEST(SyntheticCorpus, FullSimilarityKeepsOnlyKeysDistinct) {
    SyntheticSpec s = small_spec();
    s.rho = 1.0;
    for (const auto& ex : generate_corpus(s).train) {
        const Sequence& gold = ex.candidates[*ex.gold_index];
        for (const auto& k : ex.candidates) {
            if (k == gold) continue;
            EXPECT_EQ(Sequence(k.begin() + 2, k.end()), Sequence(gold.begin() + 2, gold.end()));
            EXPECT_NE(k[0], gold[0]);
            EXPECT_NE(k[0], gold[1]);
        }
    }
}

TEST(SyntheticCorpus, KnowledgeBlindCopyDropsCandidates) {
    const auto ex = generate_corpus(small_spec()).train[0];
    const auto blind = knowledge_blind(ex);
    EXPECT_EQ(blind.candidates, std::vector<Sequence>{Sequence{}});
    EXPECT_EQ(blind.gold_index, 0u);
    EXPECT_EQ(blind.history, ex.history);
    EXPECT_EQ(blind.response, ex.response);
}

TEST(SyntheticCorpus, SidecarListsSpecAndFingerprint) {
    const SyntheticSpec s;
    const std::string text = spec_sidecar(s);
    EXPECT_NE(text.find("rho=0.5\n"), std::string::npos);
    EXPECT_NE(text.find("fingerprint=" + s.fingerprint() + "\n"), std::string::npos);
}

TEST(CorpusFile, EmptyFileIsEmptyCorpus) {
    const auto path = scratch("empty.jsonl");
    std::ofstream(path).close();
    EXPECT_TRUE(load_corpus(path).empty());
}

TEST(CorpusFile, WriteReadRoundTrip) {
    const auto c = generate_corpus(small_spec());
    const auto path = scratch("train.jsonl");
    save_corpus(path, c.train);
    const auto back = load_corpus(path, 64);
    EXPECT_EQ(back, c.train);
    EXPECT_EQ(serialize_corpus(back), read_file(path));
    EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
}

TEST(CorpusFile, OptionalGoldRoundTrips) {
    DialogueExample ex;
    ex.id = 3;
    ex.history = {5};
    ex.candidates = {{6}, {7}};
    ex.response = {6, Vocab::eos};
    const std::string text = serialize_corpus({ex});
    EXPECT_NE(text.find("\"gold_index\":null"), std::string::npos);
    EXPECT_EQ(parse_corpus(text, 16, "mem").at(0), ex);
}

TEST(CorpusFile, ErrorsNameTheLine) {
    const auto c = generate_corpus(small_spec());
    std::string text = serialize_corpus({c.train[0], c.train[1]});
    auto expect_line = [](const std::string& body, const std::string& needle) {
        try {
            parse_corpus(body, 64, "f.jsonl");
            FAIL() << "expected a parse error";
        } catch (const ContractError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    auto bad_gold = c.train[1];
    bad_gold.gold_index = bad_gold.candidates.size();
    expect_line(serialize_corpus({c.train[0], bad_gold}), "f.jsonl line 2");
    expect_line(text + "{not json\n", "f.jsonl line 3");
    expect_line(R"({"id":0,"history":[],"candidates":[[5]],"gold_index":0,"response":[2],"extra":1})" "\n",
                "line 1");
    expect_line(R"({"id":0,"history":[],"candidates":[[5]],"gold_index":0})" "\n", "line 1");
    expect_line(R"({"id":0,"history":[70],"candidates":[[5]],"gold_index":0,"response":[2]})" "\n", "line 1");
}
