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
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>

#include "spi/diff/tape.hpp"
#include "spi/diff/tensor.hpp"
#include "spi/model/config.hpp"
#include "spi/random.hpp"

namespace spi {

using diff::Shape;
using diff::Tensor;
using diff::Var;

/// Parameter groups. Each tensor name starts with its group prefix.
enum class Head : unsigned {
    encoder = 1u << 0,          // "enc."      shared context encoder
    knowledge_prior = 1u << 1,  // "prior_s."  learnable p(s|C)
    latent_prior = 1u << 2,     // "prior_z."  mean of p(z|s,C)
    decoder = 1u << 3,          // "dec."      p(R|s,z,C)
    initializer = 1u << 4,      // "init."     top-S scorer
};

class HeadSet {
public:
    constexpr HeadSet() = default;
    constexpr HeadSet(Head h) : bits_(static_cast<unsigned>(h)) {}

    constexpr HeadSet operator|(HeadSet o) const { return HeadSet(bits_ | o.bits_); }
    [[nodiscard]] constexpr bool contains(Head h) const { return (bits_ & static_cast<unsigned>(h)) != 0; }
    [[nodiscard]] constexpr bool empty() const { return bits_ == 0; }

    static constexpr HeadSet none() { return HeadSet(0u); }

private:
    constexpr explicit HeadSet(unsigned bits) : bits_(bits) {}
    unsigned bits_ = 0;
};

constexpr HeadSet operator|(Head a, Head b) { return HeadSet(a) | HeadSet(b); }

inline Head head_of(const std::string& name) {
    if (name.starts_with("enc.")) return Head::encoder;
    if (name.starts_with("prior_s.")) return Head::knowledge_prior;
    if (name.starts_with("prior_z.")) return Head::latent_prior;
    if (name.starts_with("dec.")) return Head::decoder;
    if (name.starts_with("init.")) return Head::initializer;
    throw ContractError("parameter '" + name + "' belongs to no head");
}

/// All learnable tensors, keyed by name in a stable (sorted) order.
class ModelParams {
public:
    ModelParams() = default;
    explicit ModelParams(ModelConfig config) : config_(config) {}

    /// Fresh parameters: weights uniform in ±1/sqrt(fan_in), embeddings uniform in ±1, selection
    /// heads and all biases zero.
    static ModelParams initialize(const ModelConfig& config, std::uint64_t seed) {
        config.validate();
        ModelParams p(config);
        Rng rng(seed);
        const auto V = config.vocab, E = config.embed, H = config.hidden, D = config.latent;
        auto uniform = [&](Shape shape, double bound) {
            Tensor t(std::move(shape));
            for (auto& v : t.data()) {
                v = (2.0 * uniform_unit(rng) - 1.0) * bound;
            }
            return t;
        };
        auto weight = [&](std::size_t in, std::size_t out) { return uniform(Shape{in, out}, 1.0 / std::sqrt(double(in))); };

        p.set("enc.embed", uniform(Shape{V, E}, 1.0));
        p.set("enc.w_in", weight(E, H));
        p.set("enc.w_rec", weight(H, H));
        p.set("enc.b", Tensor(Shape{H}));

        p.set("prior_z.w", weight(H, D));
        p.set("prior_z.b", Tensor(Shape{D}));

        for (const char* head : {"prior_s", "init"}) {
            const std::string h = head;
            p.set(h + ".match", Tensor(Shape{H}));
            p.set(h + ".w", Tensor(Shape{H, 1}));
            p.set(h + ".b", Tensor(Shape{1}));
        }

        p.set("dec.embed", uniform(Shape{V, E}, 1.0));
        p.set("dec.w_in", weight(E, H));
        p.set("dec.w_rec", weight(H, H));
        p.set("dec.b", Tensor(Shape{H}));
        p.set("dec.z_proj", weight(D, H));
        p.set("dec.z_bias", Tensor(Shape{H}));
        p.set("dec.att_query", weight(H, H));
        p.set("dec.att_key", weight(H, H));
        p.set("dec.att_bias", Tensor(Shape{H}));
        p.set("dec.att_v", weight(H, 1).reshaped(Shape{H}));
        p.set("dec.out_h", weight(H, V));
        p.set("dec.out_c", weight(H, V));
        p.set("dec.out_b", Tensor(Shape{V}));
        return p;
    }

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }

    [[nodiscard]] const Tensor& get(const std::string& name) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) {
            throw ContractError("unknown parameter '" + name + "'");
        }
        return it->second;
    }

    Tensor& mut(const std::string& name) {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) {
            throw ContractError("unknown parameter '" + name + "'");
        }
        return it->second;
    }

    void set(const std::string& name, Tensor t) {
        head_of(name);
        tensors_.insert_or_assign(name, std::move(t));
    }

    [[nodiscard]] const std::map<std::string, Tensor>& tensors() const noexcept { return tensors_; }

    /// Zero every tensor of the given heads.
    void zero(HeadSet heads) {
        for (auto& [name, t] : tensors_) {
            if (heads.contains(head_of(name))) {
                t.fill(0.0);
            }
        }
    }

    [[nodiscard]] std::size_t count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : tensors_) {
            n += t.size();
        }
        return n;
    }

    [[nodiscard]] bool all_finite() const {
        for (const auto& [_, t] : tensors_) {
            if (!t.all_finite()) {
                return false;
            }
        }
        return true;
    }

    friend bool operator==(const ModelParams& a, const ModelParams& b) {
        return a.config_ == b.config_ && a.tensors_ == b.tensors_;
    }

private:
    ModelConfig config_;
    std::map<std::string, Tensor> tensors_;
};

/// Named gradients, same keys as the parameters they belong to.
using Gradients = std::map<std::string, Tensor>;

/// Binds parameters onto a tape on first use. Tensors are read in place, not copied.
class ParamBinder {
public:
    ParamBinder(diff::Tape& tape, const ModelParams& params, HeadSet trainable = HeadSet::none())
        : tape_(tape), params_(params), trainable_(trainable) {}

    Var operator()(const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) {
            return it->second;
        }
        Var v = tape_.external(name, params_.get(name), trainable_.contains(head_of(name)));
        bound_.emplace(name, v);
        return v;
    }

    [[nodiscard]] diff::Tape& tape() noexcept { return tape_; }
    [[nodiscard]] const ModelParams& params() const noexcept { return params_; }
    [[nodiscard]] const ModelConfig& config() const noexcept { return params_.config(); }

private:
    diff::Tape& tape_;
    const ModelParams& params_;
    HeadSet trainable_;
    std::map<std::string, Var> bound_;
};

} // namespace spi
