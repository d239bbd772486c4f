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
#include <cstddef>
#include <vector>

#include "spi/diff/ops.hpp"
#include "spi/model/example.hpp"
#include "spi/model/params.hpp"

namespace spi {

namespace d = spi::diff;

/// Encoder output for C_s = (H, K_s): one hidden state per position of [H ; sep ; K_s].
struct Encoding {
    Var states;          // n×H
    Var pooled;          // 1×H, mean over all positions
    Var history_mean;    // 1×H, mean over history positions (zeros when history is empty)
    Var candidate_mean;  // 1×H, mean over the separator and candidate positions
    Var match;           // 1×H, history-to-candidate attention agreement (zeros without history)
    std::size_t length = 0;
};

namespace detail {

inline Sequence clip_history(const Sequence& h, std::size_t cap) {
    if (h.size() <= cap) {
        return h;
    }
    return Sequence(h.end() - static_cast<std::ptrdiff_t>(cap), h.end());
}

inline Sequence clip_candidate(const Sequence& k, std::size_t cap) {
    return Sequence(k.begin(), k.begin() + static_cast<std::ptrdiff_t>(std::min(k.size(), cap)));
}

inline void check_tokens(const Sequence& seq, std::size_t vocab) {
    for (Token t : seq) {
        require(t < vocab, "token id " + std::to_string(t) + " >= vocabulary size " + std::to_string(vocab));
    }
}

inline Var rnn_layer(ParamBinder& p, const char* prefix, const Sequence& tokens, Var h0) {
    const std::string pre = prefix;
    Var x = d::gather_rows(p(pre + ".embed"), tokens);
    Var proj = d::add(d::matmul(x, p(pre + ".w_in")), p(pre + ".b"));
    return d::rnn_tanh(proj, p(pre + ".w_rec"), h0);
}

} // namespace detail

/// Encode every candidate of `ex` as the state sequence of [H ; sep ; K_i]. The recurrence restarts
/// from zero at each of the three segments, so a token run gets the same states wherever it
/// occurs; the history and separator segments are computed once and shared.
inline std::vector<Encoding> encode_all(ParamBinder& p, const DialogueExample& ex) {
    const auto& cfg = p.config();
    require(!ex.candidates.empty(), "example has no knowledge candidates");
    const Sequence history = detail::clip_history(ex.history, cfg.max_history);
    detail::check_tokens(history, cfg.vocab);
    diff::Tape& tape = p.tape();
    const Var zeros = tape.constant(Tensor(Shape{1, cfg.hidden}));

    Var hist_states{};
    Var hist_mean = zeros;
    if (!history.empty()) {
        hist_states = detail::rnn_layer(p, "enc", history, zeros);
        hist_mean = d::mean_rows(hist_states);
    }
    const Var sep_state = detail::rnn_layer(p, "enc", Sequence{Vocab::sep}, zeros);

    std::vector<Encoding> out;
    out.reserve(ex.candidates.size());
    for (const auto& cand : ex.candidates) {
        const Sequence k = detail::clip_candidate(cand, cfg.max_candidate);
        detail::check_tokens(k, cfg.vocab);
        require(!(history.empty() && k.empty()), "context needs a non-empty history or candidate");
        Var cand_states = sep_state;
        if (!k.empty()) {
            cand_states = d::concat_rows(sep_state, detail::rnn_layer(p, "enc", k, zeros));
        }
        Encoding e;
        e.states = history.empty() ? cand_states : d::concat_rows(hist_states, cand_states);
        e.pooled = d::mean_rows(e.states);
        e.history_mean = hist_mean;
        e.candidate_mean = d::mean_rows(cand_states);
        if (!history.empty()) {
            // Each history state attends over the separator and candidate states; the match
            // feature is the mean elementwise agreement between a history state and what it reads.
            Var att = d::softmax(d::matmul(hist_states, d::transpose(cand_states)));
            e.match = d::mean_rows(d::multiply(hist_states, d::matmul(att, cand_states)));
        } else {
            e.match = zeros;
        }
        e.length = history.size() + 1 + k.size();
        out.push_back(e);
    }
    return out;
}

/// Encoding of the single context C_s.
inline Encoding encode_context(ParamBinder& p, const DialogueExample& ex, std::size_t s) {
    require(s < ex.candidates.size(), "candidate index " + std::to_string(s) + " out of range");
    DialogueExample one;
    one.history = ex.history;
    one.candidates = {ex.candidates[s]};
    return encode_all(p, one).front();
}

/// Scalar selection score of one context, linear in the head's weights:
///   u·match + w·pooled + b.
inline Var selection_score(ParamBinder& p, const char* prefix, const Encoding& e) {
    const std::string pre = prefix;
    const std::size_t H = p.config().hidden;
    Var inter = d::sum(d::multiply(e.match, d::reshape(p(pre + ".match"), Shape{1, H})));
    Var lin = d::sum(d::add(d::matmul(e.pooled, p(pre + ".w")), p(pre + ".b")));
    return d::add(inter, lin);
}

/// Stack per-candidate scalar scores into a 1×M row.
inline Var stack_scores(const std::vector<Var>& scores) {
    Var row = d::reshape(scores.front(), Shape{1, 1});
    for (std::size_t i = 1; i < scores.size(); ++i) {
        row = d::concat_last(row, d::reshape(scores[i], Shape{1, 1}));
    }
    return row;
}

/// μ = pooled·W + b, as a 1×d row.
inline Var latent_mean(ParamBinder& p, const Encoding& e) {
    return d::add(d::matmul(e.pooled, p("prior_z.w")), p("prior_z.b"));
}

/// log N(z; μ, I) up to its constant: -‖z - μ‖²/2.
inline Var latent_log_density(Var z, Var mu) { return d::scale(d::squared_l2(d::sub(z, mu)), -0.5); }

/// Decoder computations that depend only on the response prefix.
struct ResponsePlan {
    Sequence targets;  // tokens scored at each step (empty for pure next-token queries)
    Var states;        // L×H decoder hidden states
    Var queries;       // L×H attention queries with bias
    Var base_logits;   // L×V output contribution of the decoder state
    std::size_t steps = 0;
};

/// Decoder computations that depend on the response and on one context encoding, but not on z.
struct MemoryPlan {
    Var energies;    // L×n attention energies over encoder states
    Var mem_logits;  // n×V output contribution of each encoder state when attended
    std::size_t slots = 0;
};

/// Teacher-forced inputs [bos, r_1..r_{L-1}] scoring targets r_1..r_L.
inline ResponsePlan plan_response(ParamBinder& p, const Sequence& inputs, Sequence targets) {
    require(!inputs.empty(), "decoder needs at least one input step");
    detail::check_tokens(inputs, p.config().vocab);
    detail::check_tokens(targets, p.config().vocab);
    ResponsePlan plan;
    const Var zeros = p.tape().constant(Tensor(Shape{1, p.config().hidden}));
    plan.states = detail::rnn_layer(p, "dec", inputs, zeros);
    plan.queries = d::add(d::matmul(plan.states, p("dec.att_query")), p("dec.att_bias"));
    plan.base_logits = d::add(d::matmul(plan.states, p("dec.out_h")), p("dec.out_b"));
    plan.targets = std::move(targets);
    plan.steps = inputs.size();
    return plan;
}

inline ResponsePlan plan_teacher_forced(ParamBinder& p, const Sequence& response) {
    Sequence targets = terminated_response(response, p.config().max_response);
    Sequence inputs{Vocab::bos};
    inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);
    return plan_response(p, inputs, std::move(targets));
}

inline MemoryPlan plan_memory(ParamBinder& p, const ResponsePlan& r, const Encoding& e) {
    MemoryPlan m;
    Var keys = d::matmul(e.states, p("dec.att_key"));
    m.energies = d::additive_scores(r.queries, keys, p("dec.att_v"));
    m.mem_logits = d::matmul(e.states, p("dec.out_c"));
    m.slots = e.length;
    return m;
}

/// L×V next-token logits given z (1×d). The z slot joins the attention as one extra memory row.
///
/// The output layer is W_h·h_l + W_c·c_l + b with c_l the attention context; it is evaluated as
/// base + a_enc·(M·W_c) + a_z·(slot·W_c) so that only the z slot is recomputed when z changes.
inline Var step_logits(ParamBinder& p, const ResponsePlan& r, const MemoryPlan& m, Var z) {
    Var slot = d::add(d::matmul(z, p("dec.z_proj")), p("dec.z_bias"));
    Var slot_key = d::matmul(slot, p("dec.att_key"));
    Var slot_energy = d::additive_scores(r.queries, slot_key, p("dec.att_v"));
    Var weights = d::softmax(d::concat_last(m.energies, slot_energy));
    Var w_mem = d::slice_cols(weights, 0, m.slots);
    Var w_slot = d::slice_cols(weights, m.slots, m.slots + 1);
    Var logits = d::add(r.base_logits, d::matmul(w_mem, m.mem_logits));
    return d::add(logits, d::matmul(w_slot, d::matmul(slot, p("dec.out_c"))));
}

/// Σ_l log p(r_l | s, z, r_<l, C) under teacher forcing.
inline Var response_log_prob(ParamBinder& p, const ResponsePlan& r, const MemoryPlan& m, Var z) {
    require(r.targets.size() == r.steps, "response plan has no targets to score");
    return d::sum(d::pick(d::log_softmax(step_logits(p, r, m, z)), r.targets));
}

inline Var as_row(diff::Tape& tape, const Tensor& z) { return tape.constant(z.reshaped(Shape{1, z.size()})); }

} // namespace spi
