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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spi/data/corpus.hpp"
#include "spi/data/synthetic.hpp"
#include "spi/diff/gradcheck.hpp"
#include "spi/learning/metrics_log.hpp"
#include "spi/learning/trainer.hpp"
#include "spi/metrics/evaluation.hpp"

namespace spi::verify {

/// Deliberate defects used as negative controls for the suites.
enum class Fault {
    none,
    prior_gradient_sign,  // flip the sign of every latent-prior gradient before checking it
    tie_break,            // greedy selection breaks ties toward the highest index
};

inline Fault parse_fault(const std::string& s) {
    if (s == "none") return Fault::none;
    if (s == "prior-gradient-sign") return Fault::prior_gradient_sign;
    if (s == "tie-break") return Fault::tie_break;
    throw ContractError("unknown fault '" + s + "' (expected none|prior-gradient-sign|tie-break)");
}

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

// ---------------------------------------------------------------------------------------------
// Random tiny models and instances.

inline ModelConfig tiny_config(std::size_t vocab, PriorMode prior) {
    ModelConfig c;
    c.vocab = vocab;
    c.embed = 4;
    c.hidden = 6;
    c.latent = 3;
    c.max_history = 8;
    c.max_candidate = 8;
    c.max_response = 8;
    c.prior = prior;
    return c;
}

/// Initialization plus uniform noise of the given scale on every entry, so that zero-initialized
/// heads take part in the checks.
inline ModelParams random_params(const ModelConfig& cfg, std::uint64_t seed, double scale = 0.5) {
    ModelParams p = ModelParams::initialize(cfg, seed);
    Rng rng(derive_seed(seed, 0x6e6f697365ULL));
    for (const auto& [name, t] : p.tensors()) {
        Tensor& m = p.mut(name);
        for (auto& v : m.data()) {
            v += (2.0 * uniform_unit(rng) - 1.0) * scale;
        }
    }
    return p;
}

inline Sequence random_tokens(Rng& rng, std::size_t vocab, std::size_t n) {
    Sequence s(n);
    for (auto& t : s) {
        t = Vocab::reserved + uniform_index(rng, vocab - Vocab::reserved);
    }
    return s;
}

/// Random example with M candidates; with probability `dup_rate` a candidate copies an earlier
/// one so exact likelihood ties occur. The response holds at most `max_response` tokens
/// including its end-of-sequence token.
inline DialogueExample random_example(Rng& rng, std::size_t vocab, std::size_t m, std::size_t max_response,
                                      double dup_rate = 0.0) {
    DialogueExample ex;
    ex.history = random_tokens(rng, vocab, 1 + uniform_index(rng, 3));
    for (std::size_t i = 0; i < m; ++i) {
        if (i > 0 && uniform_unit(rng) < dup_rate) {
            ex.candidates.push_back(ex.candidates[uniform_index(rng, i)]);
        } else {
            ex.candidates.push_back(random_tokens(rng, vocab, 1 + uniform_index(rng, 3)));
        }
    }
    ex.gold_index = uniform_index(rng, m);
    ex.response = random_tokens(rng, vocab, uniform_index(rng, max_response));
    ex.response.push_back(Vocab::eos);
    return ex;
}

// ---------------------------------------------------------------------------------------------
// Gradient checks.

struct GradientCheck {
    double max_rel_error = 0.0;
    std::string worst;  // "<quantity> <tensor>[<index>]"
};

namespace detail {

inline void record(GradientCheck& out, const std::string& what, double analytic, double numeric) {
    const double e = diff::relative_error(analytic, numeric);
    if (e > out.max_rel_error || out.worst.empty()) {
        std::ostringstream os;
        os << what << " analytic " << analytic << " numeric " << numeric;
        if (e > out.max_rel_error) {
            out.max_rel_error = e;
        }
        out.worst = os.str();
    }
}

/// Central differences of `f(params)` over every coordinate of the tensors in `grads`.
template <typename F>
void check_params(GradientCheck& out, const std::string& quantity, ModelParams params, const Gradients& grads,
                  F&& f, double h) {
    for (const auto& [name, g] : grads) {
        Tensor& t = params.mut(name);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double keep = t[i];
            t[i] = keep + h;
            const double up = f(params);
            t[i] = keep - h;
            const double down = f(params);
            t[i] = keep;
            record(out, quantity + " " + name + "[" + std::to_string(i) + "]", g[i], (up - down) / (2.0 * h));
        }
    }
}

inline void flip_if(Fault fault, Gradients& g) {
    if (fault != Fault::prior_gradient_sign) {
        return;
    }
    for (auto& [name, t] : g) {
        if (head_of(name) == Head::latent_prior) {
            for (auto& v : t.data()) {
                v = -v;
            }
        }
    }
}

} // namespace detail

/// Analytic versus central-difference gradients for one random tiny model: the complete-data
/// objective in the model heads (s, z frozen), the initializer cross-entropy in γ, and both
/// terms of ∇_z of the log joint.
inline GradientCheck gradient_check(std::uint64_t seed, Fault fault = Fault::none, double h = 1e-5) {
    Rng rng(derive_seed(seed, 0x67726164ULL));
    const PriorMode prior = seed % 2 == 0 ? PriorMode::uniform : PriorMode::learnable;
    const std::size_t vocab = 6 + uniform_index(rng, 3);
    const ModelParams params = random_params(tiny_config(vocab, prior), seed);
    const DialogueExample ex = random_example(rng, vocab, 1 + uniform_index(rng, 4), 5);
    const std::size_t s = uniform_index(rng, ex.candidates.size());
    Tensor z(Shape{params.config().latent});
    for (auto& v : z.data()) {
        v = standard_normal(rng);
    }
    const LabelSet labels = make_labels(ex.candidates.size(), ex.gold_index, s);

    GradientCheck out;
    auto objective = [&](const ModelParams& p) {
        diff::Tape tape;
        ParamBinder b(tape, p, HeadSet::none());
        return complete_data_log_likelihood(b, ex, s, z, prior == PriorMode::learnable ? &labels : nullptr)
            .total.value()
            .item();
    };
    ExampleGradient eg = complete_data_gradient(params, ex, s, z);
    detail::flip_if(fault, eg.grads);
    detail::check_params(out, "objective", params, eg.grads, objective, h);

    {
        diff::Tape tape;
        ParamBinder b(tape, params, Head::initializer);
        Var ce = initializer_cross_entropy(b, ex, labels);
        Gradients g = diff::backward(tape, ce);
        auto f = [&](const ModelParams& p) {
            diff::Tape t2;
            ParamBinder b2(t2, p, HeadSet::none());
            return initializer_cross_entropy(b2, ex, labels).value().item();
        };
        detail::check_params(out, "initializer-ce", params, g, f, h);
    }

    LatentGradientTerms terms = latent_gradient_terms(params, ex, s, z);
    if (fault == Fault::prior_gradient_sign) {
        for (auto& v : terms.prior.data()) {
            v = -v;
        }
    }
    const Tensor mu = latent_prior_mean(params, ex, s);
    for (std::size_t i = 0; i < z.size(); ++i) {
        Tensor up = z, down = z;
        up[i] += h;
        down[i] -= h;
        detail::record(out, "dz-prior[" + std::to_string(i) + "]", terms.prior[i],
                       (latent_prior_log_density(up, mu) - latent_prior_log_density(down, mu)) / (2.0 * h));
        detail::record(out, "dz-decoder[" + std::to_string(i) + "]", terms.decoder[i],
                       (decode_logprob(params, s, up, ex) - decode_logprob(params, s, down, ex)) / (2.0 * h));
    }
    return out;
}

inline SuiteResult gradcheck_suite(std::size_t seeds = 20, double tol = 1e-4, Fault fault = Fault::none) {
    SuiteResult r;
    r.name = "gradcheck";
    double worst = 0.0;
    std::string where;
    std::size_t failures = 0;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
        const GradientCheck g = gradient_check(seed, fault);
        failures += g.max_rel_error > tol;
        if (g.max_rel_error >= worst) {
            worst = g.max_rel_error;
            where = "seed " + std::to_string(seed) + ": " + g.worst;
        }
    }
    r.passed = failures == 0;
    std::ostringstream os;
    os << failures << "/" << seeds << " seeds above " << tol << "; max relative error " << worst << " (" << where
       << ")";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------------------------
// Langevin moments on a linear-Gaussian surrogate.

struct LinearGaussian {
    Eigen::MatrixXd A;  // k×d decoder
    Eigen::VectorXd y;  // observation
    Eigen::VectorXd mu; // prior mean
    double noise_var = 1.0;

    /// Posterior of z under N(μ, I) prior and y ~ N(Az, σ²I).
    [[nodiscard]] Eigen::VectorXd posterior_mean() const {
        const Eigen::MatrixXd precision =
            Eigen::MatrixXd::Identity(mu.size(), mu.size()) + A.transpose() * A / noise_var;
        return precision.ldlt().solve(mu + A.transpose() * y / noise_var);
    }

    [[nodiscard]] Tensor grad_loglik(const Tensor& z) const {
        const Eigen::Map<const Eigen::VectorXd> zv(z.data().data(), static_cast<Eigen::Index>(z.size()));
        const Eigen::VectorXd g = A.transpose() * (y - A * zv) / noise_var;
        return Tensor(Shape{z.size()}, std::vector<double>(g.data(), g.data() + g.size()));
    }
};

inline LinearGaussian random_linear_gaussian(std::uint64_t seed, std::size_t d = 3, std::size_t k = 4) {
    Rng rng(derive_seed(seed, 0x6c67ULL));
    LinearGaussian lg;
    lg.A.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    lg.y.resize(static_cast<Eigen::Index>(k));
    lg.mu.resize(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < lg.A.size(); ++i) {
        lg.A.data()[i] = 0.7 * standard_normal(rng);
    }
    for (Eigen::Index i = 0; i < lg.y.size(); ++i) {
        lg.y[i] = 2.0 * standard_normal(rng);
    }
    for (Eigen::Index i = 0; i < lg.mu.size(); ++i) {
        lg.mu[i] = standard_normal(rng);
    }
    return lg;
}

struct MomentCheck {
    Eigen::VectorXd target;
    Eigen::VectorXd estimate;
    Eigen::VectorXd standard_error;
    bool passed = false;
};

/// Standard error of the mean of a correlated series: sqrt(var · τ / n) with the integrated
/// autocorrelation time τ from Geyer's initial monotone sequence estimator.
inline double mcmc_standard_error(const std::vector<double>& x) {
    const std::size_t n = x.size();
    require(n >= 4, "series too short for a standard error");
    double mean = 0.0;
    for (double v : x) {
        mean += v / static_cast<double>(n);
    }
    auto autocov = [&](std::size_t lag) {
        double c = 0.0;
        for (std::size_t t = 0; t + lag < n; ++t) {
            c += (x[t] - mean) * (x[t + lag] - mean);
        }
        return c / static_cast<double>(n);
    };
    const double c0 = autocov(0);
    if (c0 == 0.0) {
        return 0.0;
    }
    // Sums of adjacent autocorrelation pairs are positive and decreasing for reversible chains;
    // truncate at the first non-positive pair and enforce monotonicity.
    double tau = -1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
        if (pair <= 0.0) {
            break;
        }
        pair = std::min(pair, prev);
        prev = pair;
        tau += 2.0 * pair;
    }
    return std::sqrt(c0 * std::max(tau, 1.0 / static_cast<double>(n)) / static_cast<double>(n));
}

/// Long chain with burn-in; componentwise comparison of the sample mean with the analytic
/// posterior mean in units of the autocorrelation-corrected standard error.
inline MomentCheck langevin_moment_check(std::uint64_t seed, std::size_t steps = 10000, double step_size = 0.01,
                                         std::size_t burn_in = 2000) {
    const LinearGaussian lg = random_linear_gaussian(seed);
    const std::size_t d = static_cast<std::size_t>(lg.mu.size());
    Tensor mu(Shape{d}, std::vector<double>(lg.mu.data(), lg.mu.data() + d));
    Rng rng(derive_seed(seed, 0x6d6f6dULL));
    Tensor z0 = mu;
    for (auto& v : z0.data()) {
        v += standard_normal(rng);
    }
    const LangevinSettings cfg{steps, step_size, true, 100.0};
    const LangevinTrace trace =
        langevin_chain(mu, std::move(z0), [&](const Tensor& z) { return lg.grad_loglik(z); }, cfg, rng);

    MomentCheck out;
    out.target = lg.posterior_mean();
    out.estimate.resize(static_cast<Eigen::Index>(d));
    out.standard_error.resize(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<double> series;
        for (std::size_t t = burn_in + 1; t <= steps; ++t) {
            series.push_back(trace.states[t][i]);
        }
        double m = 0.0;
        for (double v : series) {
            m += v / static_cast<double>(series.size());
        }
        out.estimate[static_cast<Eigen::Index>(i)] = m;
        out.standard_error[static_cast<Eigen::Index>(i)] = mcmc_standard_error(series);
    }
    out.passed = ((out.estimate - out.target).array().abs() <= 3.0 * out.standard_error.array()).all();
    return out;
}

inline SuiteResult langevin_moment_suite(std::size_t seeds = 10, std::size_t required = 9) {
    SuiteResult r;
    r.name = "langevin-moments";
    std::size_t passes = 0;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
        passes += langevin_moment_check(seed).passed;
    }
    r.passed = passes >= required;
    r.detail = std::to_string(passes) + "/" + std::to_string(seeds) + " seeds within 3 standard errors (need " +
               std::to_string(required) + ")";
    return r;
}

// ---------------------------------------------------------------------------------------------
// Selection against brute force.

/// argmax_i [log prior_i + log p_β(R | C_i, z = μ_i)] over all candidates, lowest index on ties,
/// computed through the single-context model entry points.
inline std::size_t brute_force_selection(const ModelParams& params, const DialogueExample& ex) {
    std::vector<double> log_prior(ex.candidates.size(), 0.0);
    if (params.config().prior == PriorMode::learnable) {
        const auto logits = knowledge_prior_logits(params, ex);
        double mx = logits[0];
        for (double v : logits) {
            mx = std::max(mx, v);
        }
        double z = 0.0;
        for (double v : logits) {
            z += std::exp(v - mx);
        }
        for (std::size_t i = 0; i < logits.size(); ++i) {
            log_prior[i] = logits[i] - mx - std::log(z);
        }
    }
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ex.candidates.size(); ++i) {
        const double score = log_prior[i] + decode_logprob(params, i, latent_prior_mean(params, ex, i), ex);
        if (score > best_score) {
            best = i;
            best_score = score;
        }
    }
    return best;
}

struct TinyInstance {
    ModelParams params;
    DialogueExample example;
};

/// V ≤ 8, M ≤ 4, responses of at most five tokens; a quarter of candidates duplicate an earlier one.
inline TinyInstance tiny_instance(std::uint64_t seed, PriorMode prior) {
    Rng rng(derive_seed(seed, 0x73656cULL));
    const std::size_t vocab = 6 + uniform_index(rng, 3);
    TinyInstance t{random_params(tiny_config(vocab, prior), derive_seed(seed, 0x70ULL)), {}};
    t.example = random_example(rng, vocab, 1 + uniform_index(rng, 4), 5, 0.25);
    return t;
}

inline SuiteResult selection_equivalence_suite(std::size_t instances = 100, Fault fault = Fault::none) {
    SuiteResult r;
    r.name = "selection-equivalence";
    std::size_t mismatches = 0;
    std::string first;
    for (PriorMode prior : {PriorMode::uniform, PriorMode::learnable}) {
        for (std::size_t k = 0; k < instances; ++k) {
            const TinyInstance t = tiny_instance(k, prior);
            SelectionRequest req;
            req.ties_to_highest = fault == Fault::tie_break;
            const std::size_t got = select_knowledge(t.params, t.example, req).chosen;
            const std::size_t want = brute_force_selection(t.params, t.example);
            if (got != want) {
                if (first.empty()) {
                    first = std::string(to_string(prior)) + " instance " + std::to_string(k) + ": selected " +
                            std::to_string(got) + ", brute force " + std::to_string(want);
                }
                ++mismatches;
            }
        }
    }
    r.passed = mismatches == 0;
    r.detail = std::to_string(mismatches) + " mismatches over " + std::to_string(2 * instances) + " instances" +
               (first.empty() ? "" : " (first: " + first + ")");
    return r;
}

inline SuiteResult top_s_consistency_suite(std::size_t instances = 100, Fault fault = Fault::none) {
    SuiteResult r;
    r.name = "top-s-consistency";
    std::size_t mismatches = 0;
    for (std::size_t k = 0; k < instances; ++k) {
        const TinyInstance t = tiny_instance(1000 + k, PriorMode::uniform);
        SelectionRequest all, top;
        all.ties_to_highest = top.ties_to_highest = fault == Fault::tie_break;
        top.top_s = t.example.candidates.size();
        const SelectionOutcome a = select_knowledge(t.params, t.example, all);
        const SelectionOutcome b = select_knowledge(t.params, t.example, top);
        mismatches += a.chosen != b.chosen || a.evaluated != b.evaluated || a.log_weights != b.log_weights;
    }
    r.passed = mismatches == 0;
    r.detail = std::to_string(mismatches) + " mismatches over " + std::to_string(instances) + " instances";
    return r;
}

// ---------------------------------------------------------------------------------------------
// Determinism of a small end-to-end pipeline.

struct PipelineArtifacts {
    std::string train_corpus;
    std::string checkpoint;
    std::string metrics_log;
    std::string report;

    friend bool operator==(const PipelineArtifacts&, const PipelineArtifacts&) = default;
};

inline PipelineArtifacts small_pipeline(std::uint64_t seed, std::size_t threads = 1) {
    data::SyntheticSpec spec;
    spec.vocab = 24;
    spec.candidates = 3;
    spec.candidate_length = 4;
    spec.train = 24;
    spec.valid = 8;
    spec.test = 8;
    spec.seed = seed;
    const data::SyntheticCorpus corpus = data::generate_corpus(spec);
    ModelConfig mc;
    mc.vocab = spec.vocab;
    mc.embed = 8;
    mc.hidden = 12;
    mc.latent = 4;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    tc.seed = seed;
    tc.threads = threads;
    PipelineArtifacts out;
    out.train_corpus = data::serialize_corpus(corpus.train);
    const TrainResult res = train(corpus.train, corpus.valid, ModelParams::initialize(mc, seed), tc,
                                  [&](const EpochMetrics& m) { out.metrics_log += metrics_line(m) + "\n"; });
    out.checkpoint = checkpoint_bytes(res.best);
    metrics::PerplexityOptions opt;
    opt.threads = threads;
    out.report = metrics::evaluate(res.best, corpus.test, opt).report.to_json().dump();
    return out;
}

inline SuiteResult determinism_suite() {
    SuiteResult r;
    r.name = "determinism";
    const PipelineArtifacts a = small_pipeline(11);
    const PipelineArtifacts b = small_pipeline(11);
    const PipelineArtifacts c = small_pipeline(11, 3);
    std::vector<std::string> diffs;
    auto compare = [&](const PipelineArtifacts& x, const char* label) {
        if (x.train_corpus != a.train_corpus) diffs.push_back(std::string(label) + " corpus");
        if (x.checkpoint != a.checkpoint) diffs.push_back(std::string(label) + " checkpoint");
        if (x.metrics_log != a.metrics_log) diffs.push_back(std::string(label) + " metrics log");
        if (x.report != a.report) diffs.push_back(std::string(label) + " report");
    };
    compare(b, "repeat");
    compare(c, "threaded");
    r.passed = diffs.empty();
    if (r.passed) {
        r.detail = "repeat and 3-thread runs byte-identical";
    } else {
        for (const auto& d : diffs) {
            r.detail += (r.detail.empty() ? "differs: " : ", ") + d;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------------------------

inline std::vector<SuiteResult> run_all(Fault fault = Fault::none) {
    std::vector<std::function<SuiteResult()>> suites = {
        [&] { return gradcheck_suite(20, 1e-4, fault); },
        [] { return langevin_moment_suite(); },
        [&] { return selection_equivalence_suite(100, fault); },
        [&] { return top_s_consistency_suite(100, fault); },
        [] { return determinism_suite(); },
    };
    std::vector<SuiteResult> out;
    for (auto& suite : suites) {
        const auto t0 = std::chrono::steady_clock::now();
        SuiteResult r = suite();
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace spi::verify
