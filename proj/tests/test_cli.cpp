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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "spi/cli/app.hpp"

using namespace spi;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "spi");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = spi::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        setenv("SPI_LOG", "quiet", 1);
        dir_ = fs::temp_directory_path() /
               ("spi_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override {
        unsetenv("SPI_LOG");
        fs::remove_all(dir_);
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    // Small corpus and a small model so every command finishes quickly.
    void synth_small(const std::string& out = "corpus") {
        ASSERT_EQ(invoke({"synth", "--vocab", "24", "--candidates", "3", "--candidate-length", "4", "--train", "24",
                       "--valid", "8", "--test", "8", "--out", path(out)})
                      .code,
                  0);
    }
    std::vector<std::string> small_model() const {
        return {"--vocab", "24", "--embed", "8", "--hidden", "8", "--latent", "4"};
    }
    Result train_small(const std::string& out, std::vector<std::string> extra = {}, const char* epochs = "2") {
        std::vector<std::string> args{"train", "--train-corpus", path("corpus/train.jsonl"), "--valid-corpus",
                                      path("corpus/valid.jsonl"), "--out", path(out), "--epochs", epochs};
        for (const auto& a : small_model()) args.push_back(a);
        for (const auto& a : extra) args.push_back(a);
        return invoke(args);
    }

    bool any_tmp_left() const {
        for (const auto& e : fs::recursive_directory_iterator(dir_)) {
            if (e.path().extension() == ".tmp") return true;
        }
        return false;
    }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, SynthWritesThreeSplitsAndSidecar) {
    const Result r = invoke({"synth", "--out", path("d")});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "spec.txt"}) {
        EXPECT_TRUE(fs::exists(dir_ / "d" / f)) << f;
    }
    EXPECT_EQ(data::load_corpus(dir_ / "d" / "train.jsonl").size(), 2000u);
    EXPECT_EQ(r.out.rfind("spec " + data::SyntheticSpec{}.fingerprint(), 0), 0u);
    EXPECT_FALSE(any_tmp_left());
}

TEST_F(Cli, SynthIsRepeatable) {
    synth_small("a");
    synth_small("b");
    for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "spec.txt"}) {
        EXPECT_EQ(read_file(dir_ / "a" / f), read_file(dir_ / "b" / f)) << f;
    }
}

TEST_F(Cli, SynthRejectsTinyVocabulary) {
    const Result r = invoke({"synth", "--vocab", "4", "--out", path("d")});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("vocabulary"), std::string::npos) << r.err;
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(invoke({}).code, cli::Exit::usage);
    EXPECT_EQ(invoke({"train"}).code, cli::Exit::usage);
    EXPECT_EQ(invoke({"synth", "--out", path("d"), "--rho", "x"}).code, cli::Exit::usage);
    EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST_F(Cli, ZeroEpochsSavesInitialization) {
    synth_small();
    const Result r = train_small("t", {"--seed", "9"}, "0");
    ASSERT_EQ(r.code, 0) << r.err;
    ModelConfig mc;
    mc.vocab = 24;
    mc.embed = 8;
    mc.hidden = 8;
    mc.latent = 4;
    EXPECT_EQ(read_file(dir_ / "t" / "model.ckpt"), checkpoint_bytes(ModelParams::initialize(mc, 9)));
}

TEST_F(Cli, TrainingIsRepeatable) {
    synth_small();
    ASSERT_EQ(train_small("a").code, 0);
    ASSERT_EQ(train_small("b", {"--threads", "3"}).code, 0);
    for (const char* f : {"model.ckpt", "final.ckpt", "metrics.jsonl"}) {
        EXPECT_EQ(read_file(dir_ / "a" / f), read_file(dir_ / "b" / f)) << f;
    }
    std::istringstream log(read_file(dir_ / "a" / "metrics.jsonl"));
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("epoch"), ++lines);
        EXPECT_TRUE(j.at("valid_loss").is_number());
    }
    EXPECT_EQ(lines, 2);
    EXPECT_FALSE(any_tmp_left());
}

TEST_F(Cli, ConfigFileFillsOptionsAndFlagsWin) {
    synth_small();
    std::ofstream(path("cfg.ini")) << "[train]\nepochs=3\nseed=4\n";
    ASSERT_EQ(invoke({"--config", path("cfg.ini"), "train", "--train-corpus", path("corpus/train.jsonl"), "--out",
                   path("f"), "--vocab", "24", "--embed", "8", "--hidden", "8", "--latent", "4"})
                  .code,
              0);
    ASSERT_EQ(invoke({"--config", path("cfg.ini"), "train", "--train-corpus", path("corpus/train.jsonl"), "--out",
                   path("g"), "--vocab", "24", "--embed", "8", "--hidden", "8", "--latent", "4", "--epochs", "1"})
                  .code,
              0);
    const std::string file_cfg = read_file(dir_ / "f" / "config.ini");
    EXPECT_NE(file_cfg.find("epochs=3"), std::string::npos);
    EXPECT_NE(file_cfg.find("seed=4"), std::string::npos);
    EXPECT_NE(read_file(dir_ / "g" / "config.ini").find("epochs=1"), std::string::npos);
    EXPECT_EQ(std::count(file_cfg.begin(), file_cfg.end(), '\n'), 20);
}

TEST_F(Cli, EvalWritesReportsAndRefusesMismatchedModel) {
    synth_small();
    ASSERT_EQ(train_small("t").code, 0);
    Result r = invoke({"eval", "--checkpoint", path("t/model.ckpt"), "--corpus", path("corpus/test.jsonl"), "--out",
                    path("report.json"), "--tsv", path("report.tsv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(read_file(dir_ / "report.json"));
    EXPECT_EQ(j.at("examples"), 8);
    EXPECT_GE(j.at("perplexity").get<double>(), 1.0);
    EXPECT_EQ(j.at("model_config"), "vocab=24;embed=8;hidden=8;latent=4;max_history=64;max_candidate=32;"
                                     "max_response=32;prior=uniform");
    EXPECT_EQ(read_file(dir_ / "report.tsv").substr(0, 9), "accuracy\t");

    r = invoke({"eval", "--checkpoint", path("t/model.ckpt"), "--corpus", path("corpus/test.jsonl"), "--out",
             path("x.json"), "--hidden", "16"});
    EXPECT_EQ(r.code, cli::Exit::usage);
    EXPECT_NE(r.err.find("fingerprint"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("--hidden 16 but checkpoint has 8"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir_ / "x.json"));

    r = invoke({"eval", "--checkpoint", path("corpus/test.jsonl"), "--corpus", path("corpus/test.jsonl"), "--out",
             path("x.json")});
    EXPECT_EQ(r.code, cli::Exit::usage);
}

TEST_F(Cli, GenerateWritesOneLinePerExample) {
    synth_small();
    ASSERT_EQ(train_small("t").code, 0);
    ASSERT_EQ(invoke({"generate", "--checkpoint", path("t/model.ckpt"), "--corpus", path("corpus/test.jsonl"), "--out",
                   path("gen.jsonl"), "--max-len", "5"})
                  .code,
              0);
    std::istringstream in(read_file(dir_ / "gen.jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("id"), n++);
        EXPECT_LE(j.at("tokens").size(), 5u);
        EXPECT_EQ(j.at("tokens").back(), Vocab::eos);
    }
    EXPECT_EQ(n, 8);
}

TEST_F(Cli, OracleKnowledgeHelpsAnUndertrainedSelector) {
    ASSERT_EQ(invoke({"synth", "--train", "300", "--valid", "20", "--test", "100", "--out", path("d")}).code, 0);
    ASSERT_EQ(invoke({"train", "--train-corpus", path("d/train.jsonl"), "--out", path("t"), "--epochs", "4",
                   "--lr-init", "0"})
                  .code,
              0);
    auto ppl = [&](bool oracle) {
        std::vector<std::string> args{"eval", "--checkpoint", path("t/model.ckpt"), "--corpus",
                                      path("d/test.jsonl"), "--out", path("r.json")};
        if (oracle) args.push_back("--oracle-knowledge");
        EXPECT_EQ(invoke(args).code, 0);
        const auto j = nlohmann::json::parse(read_file(dir_ / "r.json"));
        EXPECT_EQ(j.at("oracle_knowledge"), oracle);
        return std::make_pair(j.at("perplexity").get<double>(), j.at("accuracy").get<double>());
    };
    const auto selected = ppl(false), oracle = ppl(true);
    EXPECT_LT(selected.second, 0.5);
    EXPECT_LT(oracle.first, selected.first);
}

TEST_F(Cli, VerifyPassesAndNegativeControlsFail) {
    Result r = invoke({"verify", "--out", path("v.jsonl")});
    EXPECT_EQ(r.code, 0) << r.out;
    for (const char* suite : {"gradcheck", "langevin-moments", "selection-equivalence", "top-s-consistency",
                              "determinism"}) {
        EXPECT_NE(r.out.find(std::string("PASS ") + suite), std::string::npos) << suite << "\n" << r.out;
    }
    r = invoke({"verify", "--inject", "prior-gradient-sign"});
    EXPECT_EQ(r.code, cli::Exit::verify_failed);
    EXPECT_NE(r.out.find("FAIL gradcheck"), std::string::npos) << r.out;
    r = invoke({"verify", "--inject", "tie-break"});
    EXPECT_EQ(r.code, cli::Exit::verify_failed);
    EXPECT_NE(r.out.find("FAIL selection-equivalence"), std::string::npos) << r.out;
    EXPECT_EQ(invoke({"verify", "--inject", "bogus"}).code, cli::Exit::usage);
}

TEST_F(Cli, SweepWritesOneRowPerGridPoint) {
    synth_small();
    std::vector<std::string> args{"sweep", "--train-corpus", path("corpus/train.jsonl"), "--valid-corpus",
                                  path("corpus/valid.jsonl"), "--test-corpus", path("corpus/test.jsonl"),
                                  "--top-s-grid", "1,3", "--langevin-grid", "0,2", "--epochs", "1",
                                  "--out", path("s")};
    for (const auto& a : small_model()) args.push_back(a);
    ASSERT_EQ(invoke(args).code, 0);
    const std::string table = read_file(dir_ / "s" / "sweep.tsv");
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 5);
    args[8] = "1,x";
    EXPECT_EQ(invoke(args).code, cli::Exit::usage);
}

TEST_F(Cli, LogLevelFromEnvironment) {
    setenv("SPI_LOG", "info", 1);
    Result r = invoke({"synth", "--vocab", "24", "--candidates", "3", "--candidate-length", "4", "--train", "4",
                    "--valid", "2", "--test", "2", "--out", path("d")});
    EXPECT_EQ(r.code, 0);
    setenv("SPI_LOG", "debug", 1);
    r = invoke({"train", "--train-corpus", path("d/train.jsonl"), "--out", path("t"), "--epochs", "1", "--vocab",
             "24", "--embed", "4", "--hidden", "4", "--latent", "2"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.err.find("epoch 1 seconds"), std::string::npos) << r.err;
    setenv("SPI_LOG", "quiet", 1);
    r = invoke({"train", "--train-corpus", path("d/train.jsonl"), "--out", path("t"), "--epochs", "1", "--vocab",
             "24", "--embed", "4", "--hidden", "4", "--latent", "2"});
    EXPECT_TRUE(r.err.empty()) << r.err;
    setenv("SPI_LOG", "loud", 1);
    r = invoke({"synth", "--out", path("e")});
    EXPECT_EQ(r.code, cli::Exit::usage);
    EXPECT_NE(r.err.find("SPI_LOG"), std::string::npos);
}
