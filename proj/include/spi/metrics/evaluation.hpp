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

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "spi/generation.hpp"
#include "spi/metrics/text.hpp"
#include "spi/parallel.hpp"

namespace spi::metrics {

struct PerplexityOptions {
    bool oracle_knowledge = false;  // condition on the gold candidate instead of the selected one
    std::size_t threads = 1;
};

struct LikelihoodTotals {
    double log_prob = 0.0;
    std::size_t tokens = 0;

    [[nodiscard]] double perplexity() const {
        require(tokens > 0, "perplexity over zero tokens");
        return std::exp(-log_prob / static_cast<double>(tokens));
    }
};

inline std::size_t knowledge_for_scoring(const ModelParams& params, const DialogueExample& ex, bool oracle) {
    if (oracle) {
        require(ex.gold_index.has_value(), "oracle-knowledge perplexity needs gold indices (example " +
                                               std::to_string(ex.id) + ")");
        return *ex.gold_index;
    }
    return select_for_generation(params, ex);
}

/// Σ log p_β(R | z = μ_ŝ, C_ŝ) and the token count, with ŝ from the test-time selector.
inline LikelihoodTotals response_likelihood(const ModelParams& params, const std::vector<DialogueExample>& corpus,
                                            const PerplexityOptions& opt = {}) {
    require(!corpus.empty(), "perplexity: empty corpus");
    std::vector<double> lp(corpus.size());
    std::vector<std::size_t> tokens(corpus.size());
    parallel_for(corpus.size(), opt.threads, [&](std::size_t i) {
        const DialogueExample& ex = corpus[i];
        require(!ex.response.empty(), "perplexity: example " + std::to_string(ex.id) + " has no response");
        const std::size_t s = knowledge_for_scoring(params, ex, opt.oracle_knowledge);
        lp[i] = decode_logprob(params, s, latent_prior_mean(params, ex, s), ex);
        tokens[i] = terminated_response(ex.response, params.config().max_response).size();
    });
    LikelihoodTotals t;
    // Fixed-order reduction keeps the result independent of the thread count.
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        t.log_prob += lp[i];
        t.tokens += tokens[i];
    }
    return t;
}

inline double perplexity(const ModelParams& params, const std::vector<DialogueExample>& corpus,
                         const PerplexityOptions& opt = {}) {
    return response_likelihood(params, corpus, opt).perplexity();
}

struct EvalReport {
    double accuracy = 0.0;
    double perplexity = 0.0;
    double bleu3 = 0.0;
    double bleu4 = 0.0;
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double distinct1 = 0.0;
    double distinct2 = 0.0;
    std::size_t examples = 0;
    std::size_t tokens = 0;
    bool oracle_knowledge = false;

    [[nodiscard]] nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["accuracy"] = accuracy;
        j["perplexity"] = perplexity;
        j["bleu3"] = bleu3;
        j["bleu4"] = bleu4;
        j["rouge1"] = rouge1;
        j["rouge2"] = rouge2;
        j["distinct1"] = distinct1;
        j["distinct2"] = distinct2;
        j["examples"] = examples;
        j["tokens"] = tokens;
        j["oracle_knowledge"] = oracle_knowledge;
        return j;
    }

    [[nodiscard]] std::string to_tsv() const {
        std::ostringstream os;
        os.precision(17);
        os << "accuracy\tperplexity\tbleu3\tbleu4\trouge1\trouge2\tdistinct1\tdistinct2\texamples\ttokens\n"
           << accuracy << '\t' << perplexity << '\t' << bleu3 << '\t' << bleu4 << '\t' << rouge1 << '\t' << rouge2
           << '\t' << distinct1 << '\t' << distinct2 << '\t' << examples << '\t' << tokens << '\n';
        return os.str();
    }
};

/// Response tokens without the trailing end-of-sequence.
inline Sequence content_tokens(const Sequence& s) {
    Sequence out;
    for (Token t : s) {
        if (t == Vocab::eos) {
            break;
        }
        out.push_back(t);
    }
    return out;
}

struct Evaluation {
    EvalReport report;
    std::vector<GenerationResult> generations;
};

/// Generation plus the full metric suite. Accuracy counts only examples carrying a gold index.
inline Evaluation evaluate(const ModelParams& params, const std::vector<DialogueExample>& corpus,
                           const PerplexityOptions& opt = {}, std::size_t max_len = 32) {
    require(!corpus.empty(), "evaluate: empty corpus");
    Evaluation out;
    out.generations.resize(corpus.size());
    parallel_for(corpus.size(), opt.threads,
                 [&](std::size_t i) { out.generations[i] = generate(params, corpus[i], max_len); });
    std::vector<std::size_t> predicted, gold;
    std::vector<Sequence> hyps, refs;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].gold_index) {
            predicted.push_back(out.generations[i].s);
            gold.push_back(*corpus[i].gold_index);
        }
        hyps.push_back(content_tokens(out.generations[i].tokens));
        refs.push_back(content_tokens(corpus[i].response));
    }
    EvalReport& r = out.report;
    r.accuracy = gold.empty() ? 0.0 : selection_accuracy(predicted, gold);
    const LikelihoodTotals lt = response_likelihood(params, corpus, opt);
    r.perplexity = lt.perplexity();
    r.tokens = lt.tokens;
    r.examples = corpus.size();
    r.bleu3 = bleu_n(hyps, refs, 3);
    r.bleu4 = bleu_n(hyps, refs, 4);
    r.rouge1 = rouge_n(hyps, refs, 1);
    r.rouge2 = rouge_n(hyps, refs, 2);
    r.distinct1 = distinct_n(hyps, 1);
    r.distinct2 = distinct_n(hyps, 2);
    r.oracle_knowledge = opt.oracle_knowledge;
    return out;
}

} // namespace spi::metrics
