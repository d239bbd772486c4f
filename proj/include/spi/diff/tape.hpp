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

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spi/diff/tensor.hpp"

namespace spi::diff {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives and is not cleared.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape(); }
    [[nodiscard]] bool requires_grad() const;
};

/// Records primitive evaluations and replays their adjoint rules in reverse order.
///
/// A node requires a gradient when it is a trainable leaf or depends on one; nodes that
/// do not are stored without an adjoint closure, so a tape holding constant parameters
/// costs no more than a plain forward pass.
class Tape {
public:
    using Adjoint = std::function<void(Tape&, std::size_t)>;

    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value) { return push(std::move(value), nullptr, {}, false, {}, "constant"); }

    Var leaf(std::string name, Tensor value, bool trainable = true) {
        return push(std::move(value), nullptr, {}, trainable, std::move(name), "leaf");
    }

    /// Leaf that reads `ref` in place; `ref` must outlive the tape's use of it.
    Var external(std::string name, const Tensor& ref, bool trainable) {
        return push(Tensor{}, &ref, {}, trainable, std::move(name), "external");
    }

    /// Append the result of a primitive. `adjoint` is dropped when no input needs a gradient.
    Var record(Tensor value, std::vector<std::size_t> inputs, Adjoint adjoint, const char* op) {
        if (!value.all_finite()) {
            throw NumericError(std::string("non-finite output from ") + op);
        }
        bool needs = false;
        for (auto in : inputs) {
            needs = needs || nodes_[in].requires_grad;
        }
        Node node;
        node.value = std::move(value);
        node.requires_grad = needs;
        node.op = op;
        if (needs) {
            node.adjoint = std::move(adjoint);
        }
        nodes_.push_back(std::move(node));
        return Var{this, nodes_.size() - 1};
    }

    [[nodiscard]] const Tensor& value(std::size_t id) const {
        const auto& n = nodes_[id];
        return n.ref ? *n.ref : n.value;
    }

    [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    void clear() {
        nodes_.clear();
        adjoints_.clear();
        touched_.clear();
    }

    /// Adjoint of node `id` accumulated so far; allocates zeros on first touch.
    Tensor& accum(std::size_t id) {
        if (!touched_[id]) {
            touched_[id] = true;
            adjoints_[id] = Tensor(value(id).shape());
            touched_list_.push_back(id);
        }
        return adjoints_[id];
    }

    [[nodiscard]] const Tensor& adjoint(std::size_t id) const { return adjoints_[id]; }

    /// Reverse sweep from a scalar root. Previous adjoints are discarded first.
    void backward(Var root) {
        if (root.tape != this) {
            throw ContractError("backward root belongs to another tape");
        }
        if (value(root.id).size() != 1) {
            throw ContractError("backward needs a scalar root, got shape " + to_string(value(root.id).shape()));
        }
        reset_adjoints();
        if (!nodes_[root.id].requires_grad) {
            return;
        }
        accum(root.id)[0] = 1.0;
        for (std::size_t k = root.id + 1; k-- > 0;) {
            if (touched_[k] && nodes_[k].adjoint) {
                nodes_[k].adjoint(*this, k);
            }
        }
    }

    /// Gradient of the last backward root w.r.t. `v`; zeros if `v` was not reached.
    [[nodiscard]] Tensor grad(Var v) const { return grad_of(v.id); }

    /// Gradients of every named trainable leaf, keyed by name.
    [[nodiscard]] std::map<std::string, Tensor> gradients() const {
        std::map<std::string, Tensor> out;
        for (std::size_t k = 0; k < nodes_.size(); ++k) {
            const auto& n = nodes_[k];
            if (n.trainable_leaf) {
                if (out.count(n.name)) {
                    throw ContractError("duplicate trainable leaf name '" + n.name + "'");
                }
                out.emplace(n.name, grad_of(k));
            }
        }
        return out;
    }

private:
    struct Node {
        Tensor value;
        const Tensor* ref = nullptr;
        bool requires_grad = false;
        bool trainable_leaf = false;
        std::string name;
        const char* op = "";
        Adjoint adjoint;
    };

    Var push(Tensor value, const Tensor* ref, std::vector<std::size_t>, bool trainable, std::string name,
             const char* op) {
        Node node;
        node.value = std::move(value);
        node.ref = ref;
        node.requires_grad = trainable;
        node.trainable_leaf = trainable;
        node.name = std::move(name);
        node.op = op;
        const Tensor& v = ref ? *ref : node.value;
        if (!v.all_finite()) {
            throw NumericError("non-finite leaf '" + node.name + "'");
        }
        nodes_.push_back(std::move(node));
        return Var{this, nodes_.size() - 1};
    }

    [[nodiscard]] Tensor grad_of(std::size_t id) const {
        if (id < touched_.size() && touched_[id]) {
            return adjoints_[id];
        }
        return Tensor(value(id).shape());
    }

    void reset_adjoints() {
        for (auto id : touched_list_) {
            adjoints_[id] = Tensor{};
        }
        touched_list_.clear();
        adjoints_.resize(nodes_.size());
        touched_.assign(nodes_.size(), false);
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> adjoints_;
    std::vector<bool> touched_;
    std::vector<std::size_t> touched_list_;
};

inline const Tensor& Var::value() const { return tape->value(id); }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }

/// Free-function form: sweep from `root` and return the gradients of all named trainable leaves.
inline std::map<std::string, Tensor> backward(Tape& tape, Var root) {
    tape.backward(root);
    return tape.gradients();
}

} // namespace spi::diff
