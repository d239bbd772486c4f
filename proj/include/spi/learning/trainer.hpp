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
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "spi/generation.hpp"
#include "spi/inference/posterior.hpp"
#include "spi/learning/objective.hpp"
#include "spi/parallel.hpp"
#include "spi/random.hpp"

namespace spi {

struct TrainConfig {
    SpiConfig spi;
    double lr_model = 0.05;  // η1, ascent on the complete-data log-likelihood
    double lr_init = 0.05;   // η2, descent on the initializer cross-entropy
    std::size_t batch_size = 16;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    void validate() const {
        spi.validate();
        require(batch_size >= 1, "batch size must be at least 1");
        require(lr_model >= 0.0 && lr_init >= 0.0, "learning rates must be non-negative");
    }
};

struct LossComponents {
    double prior = 0.0;           // mean -log p(z|C_s) (plus the knowledge-prior term when learnable)
    double reconstruction = 0.0;  // mean -log p_β(R|z,C_s)
    double initializer_ce = 0.0;  // mean initializer cross-entropy

    [[nodiscard]] double surrogate() const { return prior + reconstruction; }
};

struct TrainState {
    ModelParams params;
    std::size_t epoch = 0;
    LossComponents running;
    std::uint64_t seed = 1;
};

/// Per-example outcome of posterior inference plus the gradient of the complete-data log-likelihood.
struct ExampleGradient {
    PosteriorSample sample;
    double objective = 0.0;
    double latent = 0.0;
    double reconstruction = 0.0;
    double knowledge = 0.0;
    Gradients grads;
};

inline std::uint64_t example_seed(std::uint64_t seed, std::size_t epoch, std::size_t example_id) {
    return derive_seed(seed, 0x7261696eULL + epoch, example_id);
}

/// Gradient of the complete-data log-likelihood at a frozen (s, z), restricted to the heads the
/// ascent step owns under the model's prior mode.
inline ExampleGradient complete_data_gradient(const ModelParams& params, const DialogueExample& ex, std::size_t s,
                                              const Tensor& z) {
    ExampleGradient out;
    diff::Tape tape;
    ParamBinder p(tape, params, model_heads(params.config().prior));
    std::optional<LabelSet> labels;
    if (params.config().prior == PriorMode::learnable) {
        labels = make_labels(ex.candidates.size(), ex.gold_index, s);
    }
    const CompleteDataTerms terms = complete_data_log_likelihood(p, ex, s, z, labels ? &*labels : nullptr);
    out.objective = terms.total.value().item();
    out.latent = terms.latent.value().item();
    out.reconstruction = terms.reconstruction.value().item();
    if (labels) {
        out.knowledge = terms.knowledge.value().item();
    }
    out.grads = diff::backward(tape, terms.total);
    return out;
}

namespace detail {

inline void accumulate(Gradients& into, const Gradients& g) {
    for (const auto& [name, t] : g) {
        auto it = into.find(name);
        if (it == into.end()) {
            into.emplace(name, t);
        } else {
            it->second.axpy(1.0, t);
        }
    }
}

inline void apply(ModelParams& params, const Gradients& sum, double step) {
    for (const auto& [name, g] : sum) {
        if (!g.all_finite()) {
            throw NumericError("non-finite gradient for " + name);
        }
    }
    if (step == 0.0) {
        return;
    }
    for (const auto& [name, g] : sum) {
        params.mut(name).axpy(step, g);
    }
    if (!params.all_finite()) {
        throw NumericError("parameters became non-finite after the update");
    }
}

} // namespace detail

struct MleStepResult {
    double loss = 0.0;  // negative mean complete-data log-likelihood
    LossComponents components;
    std::vector<PosteriorSample> samples;
};

/// One ascent step θ ← θ + η1·mean_n ∇θ log p(s_n, z_n, R_n | C_n), with (s_n, z_n) drawn by
/// sequential posterior inference under the current parameters and then held fixed.
inline MleStepResult mle_step(TrainState& state, const std::vector<const DialogueExample*>& batch,
                              const TrainConfig& cfg) {
    require(!batch.empty(), "training batch is empty");
    std::vector<ExampleGradient> work(batch.size());
    parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
        const DialogueExample& ex = *batch[i];
        require(!ex.response.empty(), "training example without a response");
        PosteriorSample sample =
            infer_posterior(state.params, ex, cfg.spi, example_seed(state.seed, state.epoch, ex.id));
        work[i] = complete_data_gradient(state.params, ex, sample.latents.s, sample.latents.z);
        work[i].sample = std::move(sample);
    });
    Gradients total;
    MleStepResult result;
    const double n = static_cast<double>(batch.size());
    for (auto& w : work) {
        detail::accumulate(total, w.grads);
        result.loss -= w.objective / n;
        result.components.prior -= (w.latent + w.knowledge) / n;
        result.components.reconstruction -= w.reconstruction / n;
        result.samples.push_back(std::move(w.sample));
    }
    detail::apply(state.params, total, cfg.lr_model / n);
    return result;
}

/// One descent step on the initializer head γ against multi-hot labels; nothing else moves.
inline double initializer_ce_step(TrainState& state, const std::vector<const DialogueExample*>& batch,
                                  const std::vector<LabelSet>& labels, double lr, std::size_t threads = 1) {
    require(state.params.config().prior == PriorMode::uniform, "initializer training needs the uniform prior");
    require(!batch.empty() && labels.size() == batch.size(), "one label set per example required");
    std::vector<double> losses(batch.size());
    std::vector<Gradients> grads(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t i) {
        diff::Tape tape;
        ParamBinder p(tape, state.params, Head::initializer);
        Var ce = initializer_cross_entropy(p, *batch[i], labels[i]);
        losses[i] = ce.value().item();
        grads[i] = diff::backward(tape, ce);
    });
    Gradients total;
    double loss = 0.0;
    const double n = static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        detail::accumulate(total, grads[i]);
        loss += losses[i] / n;
    }
    detail::apply(state.params, total, -lr / n);
    return loss;
}

struct ValidationReport {
    double surrogate_loss = 0.0;
    LossComponents components;
    double selection_accuracy = 0.0;
};

inline std::uint64_t validation_seed(std::uint64_t seed, std::size_t example_id) {
    return derive_seed(seed, 0x76616c6964ULL, example_id);
}

/// Mean surrogate loss at posterior samples drawn with fixed per-example seeds, plus the
/// accuracy of the test-time knowledge selector against gold labels.
inline ValidationReport validation_report(const ModelParams& params, const std::vector<DialogueExample>& examples,
                                 const TrainConfig& cfg) {
    require(!examples.empty(), "validation set is empty");
    std::vector<double> loss(examples.size()), prior(examples.size()), recon(examples.size());
    std::vector<int> hit(examples.size(), 0), labelled(examples.size(), 0);
    parallel_for(examples.size(), cfg.threads, [&](std::size_t i) {
        const DialogueExample& ex = examples[i];
        const LatentPair lp = sequential_posterior_infer(params, ex, cfg.spi, validation_seed(cfg.seed, ex.id));
        diff::Tape tape;
        ParamBinder p(tape, params);
        std::optional<LabelSet> labels;
        if (params.config().prior == PriorMode::learnable) {
            labels = make_labels(ex.candidates.size(), ex.gold_index, lp.s);
        }
        const CompleteDataTerms terms = complete_data_log_likelihood(p, ex, lp.s, lp.z, labels ? &*labels : nullptr);
        loss[i] = -terms.total.value().item();
        recon[i] = -terms.reconstruction.value().item();
        prior[i] = loss[i] - recon[i];
        if (ex.gold_index) {
            labelled[i] = 1;
            hit[i] = select_for_generation(params, ex) == *ex.gold_index;
        }
    });
    ValidationReport r;
    const double n = static_cast<double>(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        r.surrogate_loss += loss[i] / n;
        r.components.prior += prior[i] / n;
        r.components.reconstruction += recon[i] / n;
    }
    const int n_lab = std::accumulate(labelled.begin(), labelled.end(), 0);
    r.selection_accuracy = n_lab ? static_cast<double>(std::accumulate(hit.begin(), hit.end(), 0)) / n_lab : 0.0;
    return r;
}

struct EpochMetrics {
    std::size_t epoch = 0;
    double surrogate_loss = 0.0;
    double ce_loss = 0.0;
    double posterior_agreement = 0.0;  // fraction of training samples whose selected s equals gold
    std::optional<double> valid_loss;
    std::optional<double> valid_prior;
    std::optional<double> valid_reconstruction;
    std::optional<double> selection_accuracy;
};

struct TrainResult {
    TrainState state;        // parameters after the last epoch
    ModelParams best;        // lowest validation loss (initialization included)
    std::size_t best_epoch = 0;
    std::vector<EpochMetrics> log;
    std::vector<double> batch_losses;   // surrogate loss of every mle_step, in order
    std::vector<double> epoch_seconds;  // wall time of each epoch's updates (validation excluded)
};

/// Batches of `batch_size` over a seeded shuffle of [0, n).
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                           std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x73687566ULL, epoch));
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t b = 0; b < n; b += batch_size) {
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch_size)));
    }
    return batches;
}

/// Learning with sequential posterior inference: per batch, infer (s, z), ascend the complete-data
/// log-likelihood, and (uniform prior) fit the initializer to gold ∪ posterior-selected labels.
/// Keeps the parameters with the lowest validation surrogate loss.
template <typename OnEpoch>
TrainResult train(const std::vector<DialogueExample>& corpus, const std::vector<DialogueExample>& valid,
                  ModelParams init, const TrainConfig& cfg, OnEpoch&& on_epoch) {
    cfg.validate();
    require(!corpus.empty(), "training corpus is empty");
    for (const auto& ex : corpus) {
        validate(ex, init.config().vocab);
    }
    TrainResult result;
    result.state.params = std::move(init);
    result.state.seed = cfg.seed;
    result.best = result.state.params;
    std::optional<double> best_loss;
    if (!valid.empty()) {
        best_loss = validation_report(result.state.params, valid, cfg).surrogate_loss;
    }
    const bool uniform = result.state.params.config().prior == PriorMode::uniform;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        result.state.epoch = epoch;
        const auto t0 = std::chrono::steady_clock::now();
        EpochMetrics m;
        m.epoch = epoch;
        LossComponents running;
        std::size_t agree = 0, labelled = 0;
        const auto batches = epoch_batches(corpus.size(), cfg.batch_size, cfg.seed, epoch);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            std::vector<const DialogueExample*> batch;
            for (std::size_t i : batches[b]) {
                batch.push_back(&corpus[i]);
            }
            MleStepResult step;
            try {
                step = mle_step(result.state, batch, cfg);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " + e.what());
            }
            result.batch_losses.push_back(step.loss);
            running.prior += step.components.prior;
            running.reconstruction += step.components.reconstruction;
            for (std::size_t i = 0; i < batch.size(); ++i) {
                if (batch[i]->gold_index) {
                    ++labelled;
                    agree += step.samples[i].latents.s == *batch[i]->gold_index;
                }
            }
            if (uniform) {
                std::vector<LabelSet> labels;
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    labels.push_back(
                        make_labels(batch[i]->candidates.size(), batch[i]->gold_index, step.samples[i].latents.s));
                }
                running.initializer_ce += initializer_ce_step(result.state, batch, labels, cfg.lr_init, cfg.threads);
            }
        }
        const double nb = static_cast<double>(batches.size());
        running.prior /= nb;
        running.reconstruction /= nb;
        running.initializer_ce /= nb;
        result.state.running = running;
        result.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        m.surrogate_loss = running.surrogate();
        m.ce_loss = running.initializer_ce;
        m.posterior_agreement = labelled ? static_cast<double>(agree) / static_cast<double>(labelled) : 0.0;
        if (!valid.empty()) {
            const ValidationReport v = validation_report(result.state.params, valid, cfg);
            m.valid_loss = v.surrogate_loss;
            m.valid_prior = v.components.prior;
            m.valid_reconstruction = v.components.reconstruction;
            m.selection_accuracy = v.selection_accuracy;
            if (!best_loss || v.surrogate_loss < *best_loss) {
                best_loss = v.surrogate_loss;
                result.best = result.state.params;
                result.best_epoch = epoch;
            }
        } else {
            result.best = result.state.params;
            result.best_epoch = epoch;
        }
        result.log.push_back(m);
        on_epoch(m);
    }
    return result;
}

inline TrainResult train(const std::vector<DialogueExample>& corpus, const std::vector<DialogueExample>& valid,
                         ModelParams init, const TrainConfig& cfg) {
    return train(corpus, valid, std::move(init), cfg, [](const EpochMetrics&) {});
}

} // namespace spi
