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
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spi/error.hpp"

namespace spi::diff {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "," : "") << shape[i];
    }
    out << ']';
    return out.str();
}

/// Dense row-major tensor of doubles. Rank 0 holds a single scalar.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        for (auto extent : shape_) {
            if (extent == 0) {
                throw ShapeError("tensor extents must be positive, got " + to_string(shape_));
            }
        }
        data_.assign(numel(shape_), fill);
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        for (auto extent : shape_) {
            if (extent == 0) {
                throw ShapeError("tensor extents must be positive, got " + to_string(shape_));
            }
        }
        if (numel(shape_) != data_.size()) {
            throw ShapeError("shape " + to_string(shape_) + " needs " + std::to_string(numel(shape_)) +
                             " values, got " + std::to_string(data_.size()));
        }
    }

    static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

    static Tensor vector(std::vector<double> values) {
        const auto n = values.size();
        return Tensor(Shape{n}, std::move(values));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Tensor(Shape{rows, cols}, std::move(values));
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        std::vector<double> flat;
        std::size_t cols = rows.size() ? rows.begin()->size() : 0;
        for (const auto& row : rows) {
            if (row.size() != cols) {
                throw ShapeError("ragged matrix literal");
            }
            flat.insert(flat.end(), row.begin(), row.end());
        }
        return Tensor(Shape{rows.size(), cols}, std::move(flat));
    }

    static Tensor identity(std::size_t n) {
        Tensor t(Shape{n, n});
        for (std::size_t i = 0; i < n; ++i) {
            t.at(i, i) = 1.0;
        }
        return t;
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    /// Rows/cols of a rank-2 tensor; a rank-1 tensor reads as a single row.
    [[nodiscard]] std::size_t rows() const {
        return rank() == 2 ? shape_[0] : 1;
    }
    [[nodiscard]] std::size_t cols() const {
        if (rank() == 0) {
            return 1;
        }
        return shape_.back();
    }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    [[nodiscard]] std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols(), cols()};
    }

    [[nodiscard]] double item() const {
        if (data_.size() != 1) {
            throw ShapeError("item() on tensor of shape " + to_string(shape_));
        }
        return data_[0];
    }

    [[nodiscard]] bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    [[nodiscard]] Tensor reshaped(Shape shape) const {
        return Tensor(std::move(shape), data_);
    }

    void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

    /// this += scale * other
    void axpy(double scale, const Tensor& other) {
        if (other.shape_ != shape_) {
            throw ShapeError("axpy shape mismatch " + to_string(shape_) + " vs " + to_string(other.shape_));
        }
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += scale * other.data_[i];
        }
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

} // namespace spi::diff
