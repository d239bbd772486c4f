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

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "spi/data/corpus.hpp"
#include "spi/data/synthetic.hpp"
#include "spi/generation.hpp"
#include "spi/learning/metrics_log.hpp"
#include "spi/learning/trainer.hpp"
#include "spi/metrics/evaluation.hpp"
#include "spi/model/checkpoint.hpp"
#include "spi/verify.hpp"

namespace spi::cli {

enum class LogLevel { quiet, info, debug };

inline LogLevel log_level_from_env() {
    const char* v = std::getenv("SPI_LOG");
    const std::string s = v ? v : "info";
    if (s == "quiet") return LogLevel::quiet;
    if (s == "debug") return LogLevel::debug;
    if (s == "info" || s.empty()) return LogLevel::info;
    throw ContractError("SPI_LOG must be quiet, info or debug (got '" + s + "')");
}

/// Exit codes: 0 success, 1 a verification suite failed, 2 bad input or contract violation,
/// 3 fatal numeric error.
enum Exit : int { ok = 0, verify_failed = 1, usage = 2, numeric = 3 };

struct ModelArgs {
    std::size_t vocab = 64;
    std::size_t embed = 32;
    std::size_t hidden = 64;
    std::size_t latent = 16;
    std::string prior = "uniform";

    [[nodiscard]] ModelConfig config() const {
        ModelConfig c;
        c.vocab = vocab;
        c.embed = embed;
        c.hidden = hidden;
        c.latent = latent;
        c.prior = parse_prior_mode(prior);
        c.validate();
        return c;
    }
};

struct SpiArgs {
    std::size_t top_s = 5;
    std::size_t langevin_steps = 5;
    double step_size = 0.1;
    std::string selection = "greedy";
    double temperature = 1.0;
    double grad_clamp = 100.0;

    [[nodiscard]] SpiConfig config() const {
        SpiConfig c;
        c.top_s = top_s;
        c.langevin_steps = langevin_steps;
        c.step_size = step_size;
        c.selection = parse_selection_mode(selection);
        c.temperature = temperature;
        c.grad_clamp = grad_clamp;
        c.validate();
        return c;
    }
};

struct TrainArgs {
    SpiArgs spi;
    ModelArgs model;
    std::string train_path;
    std::string valid_path;
    std::string out;
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    double lr_model = 0.05;
    double lr_init = 0.05;
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    [[nodiscard]] TrainConfig config() const {
        TrainConfig c;
        c.spi = spi.config();
        c.lr_model = lr_model;
        c.lr_init = lr_init;
        c.batch_size = batch_size;
        c.epochs = epochs;
        c.seed = seed;
        c.threads = threads;
        c.validate();
        return c;
    }
};

inline void add_model_options(CLI::App* app, ModelArgs& m) {
    app->add_option("--vocab", m.vocab, "Vocabulary size")->capture_default_str();
    app->add_option("--embed", m.embed, "Token embedding width")->capture_default_str();
    app->add_option("--hidden", m.hidden, "Recurrent hidden width")->capture_default_str();
    app->add_option("--latent", m.latent, "Latent dimension d")->capture_default_str();
    app->add_option("--prior", m.prior, "Knowledge prior")
        ->check(CLI::IsMember({"uniform", "learnable"}))
        ->capture_default_str();
}

inline void add_spi_options(CLI::App* app, SpiArgs& s) {
    app->add_option("--top-s", s.top_s, "Initializer shortlist size S (uniform prior)")->capture_default_str();
    app->add_option("--langevin-steps", s.langevin_steps, "Langevin steps T")->capture_default_str();
    app->add_option("--step-size", s.step_size, "Langevin step size")->capture_default_str();
    app->add_option("--selection", s.selection, "Posterior selection mode")
        ->check(CLI::IsMember({"greedy", "sampled"}))
        ->capture_default_str();
    app->add_option("--temperature", s.temperature, "Temperature of sampled selection")->capture_default_str();
    app->add_option("--grad-clamp", s.grad_clamp, "Per-element clamp on the latent likelihood gradient")
        ->capture_default_str();
}

inline void add_train_options(CLI::App* app, TrainArgs& t) {
    add_model_options(app, t.model);
    add_spi_options(app, t.spi);
    app->add_option("--epochs", t.epochs, "Training epochs")->capture_default_str();
    app->add_option("--batch-size", t.batch_size, "Examples per update")->capture_default_str();
    app->add_option("--lr-model", t.lr_model, "Ascent rate of the model heads")->capture_default_str();
    app->add_option("--lr-init", t.lr_init, "Descent rate of the initializer")->capture_default_str();
    app->add_option("--seed", t.seed, "Random seed")->capture_default_str();
    app->add_option("--threads", t.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

class Logger {
public:
    Logger(LogLevel level, std::ostream& err) : level_(level), err_(err) {}
    void info(const std::string& msg) const {
        if (level_ != LogLevel::quiet) err_ << msg << "\n";
    }
    void debug(const std::string& msg) const {
        if (level_ == LogLevel::debug) err_ << msg << "\n";
    }

private:
    LogLevel level_;
    std::ostream& err_;
};

/// Effective value of every option of a subcommand, one "key = value" per line.
inline std::string effective_config(const CLI::App* sub) { return sub->config_to_str(true, false); }

inline nlohmann::ordered_json effective_config_json(const CLI::App* sub) {
    nlohmann::ordered_json j;
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || opt->get_expected_min() == 0) {
            if (opt->get_expected_min() == 0 && name != "help" && !name.empty()) {
                j[name] = opt->as<bool>();
            }
            continue;
        }
        const std::string v = opt->count() ? opt->as<std::string>() : opt->get_default_str();
        j[name] = v;
    }
    return j;
}

inline std::filesystem::path ensure_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    std::filesystem::create_directories(p);
    return p;
}

inline std::unique_ptr<CLI::App> build_app(data::SyntheticSpec& synth, std::string& synth_out, TrainArgs& train,
                                           std::string& ckpt, std::string& corpus, std::string& out,
                                           std::string& tsv, bool& oracle, std::size_t& max_len, std::size_t& threads,
                                           std::string& inject, std::string& sweep_s, std::string& sweep_t,
                                           std::string& test_path) {
    auto app = std::make_unique<CLI::App>("Knowledge-grounded latent-variable dialogue model with sequential "
                                          "posterior inference",
                                          "spi");
    app->set_config("--config", "", "TOML/INI file with option values; command-line flags take precedence");
    app->require_subcommand(1);

    CLI::App* s = app->add_subcommand("synth", "Generate the synthetic train/valid/test corpus");
    s->add_option("--vocab", synth.vocab, "Vocabulary size")->capture_default_str();
    s->add_option("--candidates", synth.candidates, "Knowledge candidates per example (M)")->capture_default_str();
    s->add_option("--candidate-length", synth.candidate_length, "Tokens per candidate")->capture_default_str();
    s->add_option("--key-length", synth.key_length, "Leading candidate tokens quoted in the history")
        ->capture_default_str();
    s->add_option("--styles", synth.styles, "Response templates (G)")->capture_default_str();
    s->add_option("--train", synth.train, "Training examples")->capture_default_str();
    s->add_option("--valid", synth.valid, "Validation examples")->capture_default_str();
    s->add_option("--test", synth.test, "Test examples")->capture_default_str();
    s->add_option("--rho", synth.rho, "Distractor similarity in [0, 1]")->capture_default_str();
    s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
    s->add_option("--out", synth_out, "Output directory")->required();

    CLI::App* t = app->add_subcommand("train", "Train a model");
    add_train_options(t, train);
    t->add_option("--train-corpus", train.train_path, "Training corpus (JSON lines)")->required();
    t->add_option("--valid-corpus", train.valid_path, "Validation corpus (JSON lines)");
    t->add_option("--out", train.out, "Output directory")->required();

    CLI::App* e = app->add_subcommand("eval", "Evaluate a checkpoint on a corpus");
    add_model_options(e, train.model);
    e->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    e->add_option("--corpus", corpus, "Corpus (JSON lines)")->required();
    e->add_option("--out", out, "Report file (JSON)")->required();
    e->add_option("--tsv", tsv, "Also write the report as a tab-separated table");
    e->add_flag("--oracle-knowledge", oracle, "Score perplexity with the gold candidate");
    e->add_option("--max-len", max_len, "Generation length cap")->capture_default_str();
    e->add_option("--threads", threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    CLI::App* g = app->add_subcommand("generate", "Generate responses for a corpus");
    g->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    g->add_option("--corpus", corpus, "Corpus (JSON lines)")->required();
    g->add_option("--out", out, "Generations (JSON lines)")->required();
    g->add_option("--max-len", max_len, "Generation length cap")->capture_default_str();
    g->add_option("--threads", threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    CLI::App* v = app->add_subcommand("verify", "Run the property suites");
    v->add_option("--inject", inject, "Negative control")
        ->check(CLI::IsMember({"none", "prior-gradient-sign", "tie-break"}))
        ->capture_default_str();
    v->add_option("--out", out, "Suite results (JSON lines)");

    CLI::App* w = app->add_subcommand("sweep", "Train and evaluate over a grid of S and T");
    add_train_options(w, train);
    w->add_option("--train-corpus", train.train_path, "Training corpus (JSON lines)")->required();
    w->add_option("--valid-corpus", train.valid_path, "Validation corpus (JSON lines)")->required();
    w->add_option("--test-corpus", test_path, "Test corpus (JSON lines)");
    w->add_option("--top-s-grid", sweep_s, "Comma-separated values of S")->required();
    w->add_option("--langevin-grid", sweep_t, "Comma-separated values of T")->required();
    w->add_option("--out", train.out, "Output directory")->required();
    return app;
}

inline std::vector<std::size_t> parse_grid(const std::string& text, const char* what) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        try {
            std::size_t pos = 0;
            out.push_back(std::stoul(item, &pos));
            require(pos == item.size(), "");
        } catch (const std::exception&) {
            throw ContractError(std::string(what) + " grid entry '" + item + "' is not a non-negative integer");
        }
    }
    require(!out.empty(), std::string(what) + " grid is empty");
    return out;
}

/// Checkpoint accepted only when it matches every model option given explicitly on the command line.
inline void check_fingerprint(const ModelConfig& ckpt, const CLI::App* sub, const ModelArgs& requested) {
    auto given = [&](const char* flag) { return sub->get_option(flag)->count() > 0; };
    std::vector<std::string> diffs;
    auto cmp = [&](const char* flag, const std::string& have, const std::string& want) {
        if (given(flag) && have != want) {
            diffs.push_back(std::string(flag) + " " + want + " but checkpoint has " + have);
        }
    };
    cmp("--vocab", std::to_string(ckpt.vocab), std::to_string(requested.vocab));
    cmp("--embed", std::to_string(ckpt.embed), std::to_string(requested.embed));
    cmp("--hidden", std::to_string(ckpt.hidden), std::to_string(requested.hidden));
    cmp("--latent", std::to_string(ckpt.latent), std::to_string(requested.latent));
    cmp("--prior", to_string(ckpt.prior), requested.prior);
    if (!diffs.empty()) {
        std::string msg = "checkpoint fingerprint " + fnv1a_hex(ckpt.canonical()) + " (" + ckpt.canonical() +
                          ") does not match the requested configuration:";
        for (const auto& d : diffs) {
            msg += " " + d + ";";
        }
        throw ContractError(msg);
    }
}

inline std::string generation_line(const DialogueExample& ex, const GenerationResult& g) {
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    j["s"] = g.s;
    j["tokens"] = g.tokens;
    j["log_probs"] = g.log_probs;
    return j.dump();
}

struct TrainOutcome {
    TrainResult result;
    std::string metrics_log;
};

inline TrainOutcome run_training(const TrainArgs& args, const std::vector<DialogueExample>& train_set,
                                 const std::vector<DialogueExample>& valid_set, const Logger& log,
                                 const std::filesystem::path* metrics_path) {
    const TrainConfig cfg = args.config();
    const ModelConfig mc = args.model.config();
    TrainOutcome out;
    out.result = train(train_set, valid_set, ModelParams::initialize(mc, args.seed), cfg, [&](const EpochMetrics& m) {
        out.metrics_log += metrics_line(m) + "\n";
        if (metrics_path) {
            write_file_atomic(*metrics_path, out.metrics_log);
        }
        log.info("epoch " + metrics_line(m));
    });
    return out;
}

/// Runs one command line. Output files are written atomically; human-readable progress goes to
/// \`err\` subject to SPI_LOG, and the primary result line to \`out\`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    data::SyntheticSpec synth;
    std::string synth_out, ckpt, corpus, out_path, tsv, inject = "none", sweep_s, sweep_t, test_path;
    TrainArgs train_args;
    bool oracle = false;
    std::size_t max_len = 32, threads = 1;
    auto app = build_app(synth, synth_out, train_args, ckpt, corpus, out_path, tsv, oracle, max_len, threads, inject,
                         sweep_s, sweep_t, test_path);
    try {
        app->parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostream& stream = e.get_exit_code() == 0 ? out : err;
        stream << (e.get_exit_code() == 0 ? app->help() : std::string(e.what()) + "\n");
        return e.get_exit_code() == 0 ? Exit::ok : Exit::usage;
    }
    try {
        const Logger log(log_level_from_env(), err);
        CLI::App* sub = app->get_subcommands().front();
        const std::string name = sub->get_name();

        if (name == "synth") {
            const data::SyntheticCorpus c = data::generate_corpus(synth);
            const auto dir = ensure_dir(synth_out);
            data::save_corpus(dir / "train.jsonl", c.train);
            data::save_corpus(dir / "valid.jsonl", c.valid);
            data::save_corpus(dir / "test.jsonl", c.test);
            write_file_atomic(dir / "spec.txt", data::spec_sidecar(synth));
            out << "spec " << synth.fingerprint() << " " << synth.canonical() << "\n";
            return Exit::ok;
        }

        if (name == "train") {
            const ModelConfig mc = train_args.model.config();
            const auto train_set = data::load_corpus(train_args.train_path, mc.vocab);
            const auto valid_set = train_args.valid_path.empty()
                                       ? std::vector<DialogueExample>{}
                                       : data::load_corpus(train_args.valid_path, mc.vocab);
            const auto dir = ensure_dir(train_args.out);
            write_file_atomic(dir / "config.ini", effective_config(sub));
            const auto metrics_path = dir / "metrics.jsonl";
            const auto t0 = std::chrono::steady_clock::now();
            TrainOutcome r = run_training(train_args, train_set, valid_set, log, &metrics_path);
            write_file_atomic(metrics_path, r.metrics_log);
            save_checkpoint(r.result.best, dir / "model.ckpt");
            save_checkpoint(r.result.state.params, dir / "final.ckpt");
            for (std::size_t e = 0; e < r.result.epoch_seconds.size(); ++e) {
                log.debug("epoch " + std::to_string(e + 1) + " seconds " + std::to_string(r.result.epoch_seconds[e]));
            }
            log.info("trained in " +
                     std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) +
                     " s");
            out << "checkpoint " << (dir / "model.ckpt").string() << " best_epoch " << r.result.best_epoch
                << " fingerprint " << fnv1a_hex(mc.canonical()) << "\n";
            return Exit::ok;
        }

        if (name == "eval") {
            const ModelParams params = load_checkpoint(std::filesystem::path(ckpt));
            check_fingerprint(params.config(), sub, train_args.model);
            const auto examples = data::load_corpus(corpus, params.config().vocab);
            metrics::PerplexityOptions opt;
            opt.oracle_knowledge = oracle;
            opt.threads = threads;
            const metrics::Evaluation ev = metrics::evaluate(params, examples, opt, max_len);
            nlohmann::ordered_json j = ev.report.to_json();
            j["checkpoint_fingerprint"] = fnv1a_hex(params.config().canonical());
            j["model_config"] = params.config().canonical();
            j["config"] = effective_config_json(sub);
            write_file_atomic(out_path, j.dump() + "\n");
            if (!tsv.empty()) {
                write_file_atomic(tsv, ev.report.to_tsv());
            }
            out << ev.report.to_json().dump() << "\n";
            return Exit::ok;
        }

        if (name == "generate") {
            const ModelParams params = load_checkpoint(std::filesystem::path(ckpt));
            const auto examples = data::load_corpus(corpus, params.config().vocab);
            std::vector<GenerationResult> gens(examples.size());
            parallel_for(examples.size(), threads,
                         [&](std::size_t i) { gens[i] = generate(params, examples[i], max_len); });
            std::string text;
            for (std::size_t i = 0; i < examples.size(); ++i) {
                text += generation_line(examples[i], gens[i]) + "\n";
            }
            write_file_atomic(out_path, text);
            out << "generated " << examples.size() << " responses\n";
            return Exit::ok;
        }

        if (name == "verify") {
            const auto results = verify::run_all(verify::parse_fault(inject));
            bool all = true;
            std::string lines;
            for (const auto& r : results) {
                all = all && r.passed;
                nlohmann::ordered_json j;
                j["suite"] = r.name;
                j["passed"] = r.passed;
                j["detail"] = r.detail;
                lines += j.dump() + "\n";
                out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
                log.info(r.name + " took " + std::to_string(r.seconds) + " s");
            }
            if (!out_path.empty()) {
                write_file_atomic(out_path, lines);
            }
            return all ? Exit::ok : Exit::verify_failed;
        }

        if (name == "sweep") {
            const ModelConfig mc = train_args.model.config();
            const auto s_grid = parse_grid(sweep_s, "top-s");
            const auto t_grid = parse_grid(sweep_t, "langevin-steps");
            const auto train_set = data::load_corpus(train_args.train_path, mc.vocab);
            const auto valid_set = data::load_corpus(train_args.valid_path, mc.vocab);
            const auto test_set = test_path.empty() ? std::vector<DialogueExample>{}
                                                    : data::load_corpus(test_path, mc.vocab);
            const auto dir = ensure_dir(train_args.out);
            write_file_atomic(dir / "config.ini", effective_config(sub));
            std::string table = "top_s\tlangevin_steps\tbest_epoch\tvalid_loss\tvalid_accuracy\ttest_accuracy\t"
                                "test_perplexity\ttest_bleu4\ttest_rouge2\n";
            for (std::size_t S : s_grid) {
                for (std::size_t T : t_grid) {
                    TrainArgs a = train_args;
                    a.spi.top_s = S;
                    a.spi.langevin_steps = T;
                    TrainOutcome r = run_training(a, train_set, valid_set, log, nullptr);
                    const ValidationReport v = validation_report(r.result.best, valid_set, a.config());
                    std::ostringstream row;
                    row.precision(17);
                    row << S << '\t' << T << '\t' << r.result.best_epoch << '\t' << v.surrogate_loss << '\t'
                        << v.selection_accuracy;
                    if (!test_set.empty()) {
                        metrics::PerplexityOptions opt;
                        opt.threads = a.threads;
                        const auto ev = metrics::evaluate(r.result.best, test_set, opt);
                        row << '\t' << ev.report.accuracy << '\t' << ev.report.perplexity << '\t' << ev.report.bleu4
                            << '\t' << ev.report.rouge2;
                    } else {
                        row << "\t\t\t\t";
                    }
                    table += row.str() + "\n";
                    write_file_atomic(dir / "sweep.tsv", table);
                    log.info("sweep S=" + std::to_string(S) + " T=" + std::to_string(T) + " done");
                }
            }
            out << "sweep " << (dir / "sweep.tsv").string() << " rows " << s_grid.size() * t_grid.size() << "\n";
            return Exit::ok;
        }
        err << "unknown command " << name << "\n";
        return Exit::usage;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return Exit::numeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return Exit::usage;
    }
}

} // namespace spi::cli
