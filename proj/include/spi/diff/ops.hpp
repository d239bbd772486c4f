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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "spi/diff/tape.hpp"
#include "spi/diff/tensor.hpp"

namespace spi::diff {

namespace detail {

inline Tape& same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape) {
        throw ContractError(std::string(op) + ": operands live on different tapes");
    }
    return *a.tape;
}

inline void expect_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected a matrix, got shape " + to_string(t.shape()));
    }
}

inline void expect_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

template <typename F>
Var unary(Var a, const char* op, F&& f, double (*dfdx)(double x, double y)) {
    Tape& tape = *a.tape;
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = f(x[i]);
    }
    const std::size_t ia = a.id;
    return tape.record(std::move(y), {ia},
                       [ia, dfdx](Tape& t, std::size_t self) {
                           const Tensor& g = t.adjoint(self);
                           const Tensor& xv = t.value(ia);
                           const Tensor& yv = t.value(self);
                           Tensor& ga = t.accum(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               ga[i] += g[i] * dfdx(xv[i], yv[i]);
                           }
                       },
                       op);
}

} // namespace detail

/// C = A·B for A (r×k), B (k×c).
inline Var matmul(Var a, Var b) {
    Tape& tape = detail::same_tape(a, b, "matmul");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    detail::expect_rank2(A, "matmul");
    detail::expect_rank2(B, "matmul");
    const std::size_t r = A.shape()[0], k = A.shape()[1], c = B.shape()[1];
    if (B.shape()[0] != k) {
        throw ShapeError("matmul: inner dimensions differ, " + to_string(A.shape()) + " x " + to_string(B.shape()));
    }
    Tensor C(Shape{r, c});
    for (std::size_t i = 0; i < r; ++i) {
        double* crow = C.data().data() + i * c;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) {
                continue;
            }
            const double* brow = B.data().data() + p * c;
            for (std::size_t j = 0; j < c; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
    const std::size_t ia = a.id, ib = b.id;
    return tape.record(std::move(C), {ia, ib},
                       [ia, ib, r, k, c](Tape& t, std::size_t self) {
                           const Tensor& G = t.adjoint(self);
                           if (t.requires_grad(ia)) {
                               const Tensor& Bv = t.value(ib);
                               Tensor& gA = t.accum(ia);
                               for (std::size_t i = 0; i < r; ++i) {
                                   for (std::size_t p = 0; p < k; ++p) {
                                       double acc = 0.0;
                                       for (std::size_t j = 0; j < c; ++j) {
                                           acc += G[i * c + j] * Bv[p * c + j];
                                       }
                                       gA[i * k + p] += acc;
                                   }
                               }
                           }
                           if (t.requires_grad(ib)) {
                               const Tensor& Av = t.value(ia);
                               Tensor& gB = t.accum(ib);
                               for (std::size_t i = 0; i < r; ++i) {
                                   for (std::size_t p = 0; p < k; ++p) {
                                       const double aip = Av[i * k + p];
                                       if (aip == 0.0) {
                                           continue;
                                       }
                                       for (std::size_t j = 0; j < c; ++j) {
                                           gB[p * c + j] += aip * G[i * c + j];
                                       }
                                   }
                               }
                           }
                       },
                       "matmul");
}

namespace detail {

// Shared body of add/sub: same shapes, or a matrix plus a row-bias (rank-1 or 1×c).
inline Var add_scaled(Var a, Var b, double sign, const char* op) {
    Tape& tape = same_tape(a, b, op);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const bool broadcast = A.shape() != B.shape();
    if (broadcast) {
        const bool row_bias = A.rank() == 2 && B.size() == A.cols() &&
                              (B.rank() == 1 || (B.rank() == 2 && B.shape()[0] == 1));
        if (!row_bias) {
            throw ShapeError(std::string(op) + ": shape mismatch " + to_string(A.shape()) + " vs " +
                             to_string(B.shape()));
        }
    }
    Tensor C = A;
    const std::size_t cols = broadcast ? B.size() : C.size();
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] += sign * B[i % cols];
    }
    const std::size_t ia = a.id, ib = b.id;
    return tape.record(std::move(C), {ia, ib},
                       [ia, ib, sign, cols](Tape& t, std::size_t self) {
                           const Tensor& G = t.adjoint(self);
                           if (t.requires_grad(ia)) {
                               t.accum(ia).axpy(1.0, G);
                           }
                           if (t.requires_grad(ib)) {
                               Tensor& gB = t.accum(ib);
                               for (std::size_t i = 0; i < G.size(); ++i) {
                                   gB[i % cols] += sign * G[i];
                               }
                           }
                       },
                       op);
}

} // namespace detail

inline Var add(Var a, Var b) { return detail::add_scaled(a, b, 1.0, "add"); }
inline Var sub(Var a, Var b) { return detail::add_scaled(a, b, -1.0, "sub"); }

/// Elementwise product.
inline Var multiply(Var a, Var b) {
    Tape& tape = detail::same_tape(a, b, "multiply");
    detail::expect_same(a.value(), b.value(), "multiply");
    Tensor C = a.value();
    const Tensor& B = b.value();
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] *= B[i];
    }
    const std::size_t ia = a.id, ib = b.id;
    return tape.record(std::move(C), {ia, ib},
                       [ia, ib](Tape& t, std::size_t self) {
                           const Tensor& G = t.adjoint(self);
                           if (t.requires_grad(ia)) {
                               const Tensor& Bv = t.value(ib);
                               Tensor& g = t.accum(ia);
                               for (std::size_t i = 0; i < G.size(); ++i) {
                                   g[i] += G[i] * Bv[i];
                               }
                           }
                           if (t.requires_grad(ib)) {
                               const Tensor& Av = t.value(ia);
                               Tensor& g = t.accum(ib);
                               for (std::size_t i = 0; i < G.size(); ++i) {
                                   g[i] += G[i] * Av[i];
                               }
                           }
                       },
                       "multiply");
}

inline Var scale(Var a, double factor) {
    Tensor C = a.value();
    for (auto& v : C.data()) {
        v *= factor;
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(C), {ia},
                          [ia, factor](Tape& t, std::size_t self) { t.accum(ia).axpy(factor, t.adjoint(self)); },
                          "scale");
}

inline Var tanh(Var a) {
    return detail::unary(
        a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var relu(Var a) {
    return detail::unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(Var a) {
    return detail::unary(
        a, "sigmoid",
        [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

/// log(1 + exp(x)), stable for large |x|.
inline Var softplus(Var a) {
    return detail::unary(
        a, "softplus", [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

inline Var log(Var a) {
    for (double v : a.value().data()) {
        if (!(v > 0.0)) {
            throw NumericError("log of non-positive value " + std::to_string(v));
        }
    }
    return detail::unary(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

namespace detail {

inline Var softmax_impl(Var a, bool log_space) {
    const Tensor& X = a.value();
    if (X.rank() == 0) {
        throw ShapeError("softmax needs at least one axis");
    }
    const std::size_t cols = X.cols(), rows = X.size() / cols;
    Tensor Y(X.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = X.data().data() + r * cols;
        double* y = Y.data().data() + r * cols;
        const double m = *std::max_element(x, x + cols);
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            z += std::exp(x[j] - m);
        }
        const double lz = m + std::log(z);
        for (std::size_t j = 0; j < cols; ++j) {
            y[j] = log_space ? x[j] - lz : std::exp(x[j] - lz);
        }
    }
    const std::size_t ia = a.id;
    return a.tape->record(
        std::move(Y), {ia},
        [ia, rows, cols, log_space](Tape& t, std::size_t self) {
            const Tensor& G = t.adjoint(self);
            const Tensor& Yv = t.value(self);
            Tensor& gA = t.accum(ia);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* g = G.data().data() + r * cols;
                const double* y = Yv.data().data() + r * cols;
                double* ga = gA.data().data() + r * cols;
                if (log_space) {
                    double gs = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                        gs += g[j];
                    }
                    for (std::size_t j = 0; j < cols; ++j) {
                        ga[j] += g[j] - std::exp(y[j]) * gs;
                    }
                } else {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                        dot += g[j] * y[j];
                    }
                    for (std::size_t j = 0; j < cols; ++j) {
                        ga[j] += y[j] * (g[j] - dot);
                    }
                }
            }
        },
        log_space ? "log_softmax" : "softmax");
}

} // namespace detail

/// Softmax over the last axis.
inline Var softmax(Var a) { return detail::softmax_impl(a, false); }

/// Log-softmax over the last axis.
inline Var log_softmax(Var a) { return detail::softmax_impl(a, true); }

/// Sum of all entries, as a scalar.
inline Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) {
        s += v;
    }
    const std::size_t ia = a.id;
    return a.tape->record(Tensor::scalar(s), {ia},
                          [ia](Tape& t, std::size_t self) {
                              const double g = t.adjoint(self)[0];
                              for (auto& v : t.accum(ia).data()) {
                                  v += g;
                              }
                          },
                          "sum");
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Column means of a matrix, as a 1×c row.
inline Var mean_rows(Var a) {
    const Tensor& X = a.value();
    detail::expect_rank2(X, "mean_rows");
    const std::size_t rows = X.shape()[0], cols = X.shape()[1];
    Tensor Y(Shape{1, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) {
            Y[j] += X[r * cols + j];
        }
    }
    const double inv = 1.0 / static_cast<double>(rows);
    for (auto& v : Y.data()) {
        v *= inv;
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(Y), {ia},
                          [ia, rows, cols, inv](Tape& t, std::size_t self) {
                              const Tensor& G = t.adjoint(self);
                              Tensor& gA = t.accum(ia);
                              for (std::size_t r = 0; r < rows; ++r) {
                                  for (std::size_t j = 0; j < cols; ++j) {
                                      gA[r * cols + j] += inv * G[j];
                                  }
                              }
                          },
                          "mean_rows");
}

/// Rows `ids` of `table`, stacked into an n×c matrix.
inline Var gather_rows(Var table, const std::vector<std::size_t>& ids) {
    const Tensor& T = table.value();
    detail::expect_rank2(T, "gather_rows");
    if (ids.empty()) {
        throw ShapeError("gather_rows: empty index list");
    }
    const std::size_t cols = T.shape()[1];
    Tensor Y(Shape{ids.size(), cols});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= T.shape()[0]) {
            throw ContractError("gather_rows: index " + std::to_string(ids[r]) + " out of range " +
                                std::to_string(T.shape()[0]));
        }
        std::copy_n(T.data().data() + ids[r] * cols, cols, Y.data().data() + r * cols);
    }
    const std::size_t ia = table.id;
    return table.tape->record(std::move(Y), {ia},
                              [ia, ids, cols](Tape& t, std::size_t self) {
                                  const Tensor& G = t.adjoint(self);
                                  Tensor& gT = t.accum(ia);
                                  for (std::size_t r = 0; r < ids.size(); ++r) {
                                      for (std::size_t j = 0; j < cols; ++j) {
                                          gT[ids[r] * cols + j] += G[r * cols + j];
                                      }
                                  }
                              },
                              "gather_rows");
}

/// [a | b] along the last axis; both must be matrices with equal row counts.
inline Var concat_last(Var a, Var b) {
    Tape& tape = detail::same_tape(a, b, "concat_last");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    detail::expect_rank2(A, "concat_last");
    detail::expect_rank2(B, "concat_last");
    if (A.shape()[0] != B.shape()[0]) {
        throw ShapeError("concat_last: row counts differ, " + to_string(A.shape()) + " vs " + to_string(B.shape()));
    }
    const std::size_t rows = A.shape()[0], ca = A.shape()[1], cb = B.shape()[1];
    Tensor C(Shape{rows, ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(A.data().data() + r * ca, ca, C.data().data() + r * (ca + cb));
        std::copy_n(B.data().data() + r * cb, cb, C.data().data() + r * (ca + cb) + ca);
    }
    const std::size_t ia = a.id, ib = b.id;
    return tape.record(std::move(C), {ia, ib},
                       [ia, ib, rows, ca, cb](Tape& t, std::size_t self) {
                           const Tensor& G = t.adjoint(self);
                           if (t.requires_grad(ia)) {
                               Tensor& g = t.accum(ia);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t j = 0; j < ca; ++j) {
                                       g[r * ca + j] += G[r * (ca + cb) + j];
                                   }
                               }
                           }
                           if (t.requires_grad(ib)) {
                               Tensor& g = t.accum(ib);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t j = 0; j < cb; ++j) {
                                       g[r * cb + j] += G[r * (ca + cb) + ca + j];
                                   }
                               }
                           }
                       },
                       "concat_last");
}

/// a stacked on top of b; both must be matrices with equal column counts.
inline Var concat_rows(Var a, Var b) {
    Tape& tape = detail::same_tape(a, b, "concat_rows");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    detail::expect_rank2(A, "concat_rows");
    detail::expect_rank2(B, "concat_rows");
    if (A.shape()[1] != B.shape()[1]) {
        throw ShapeError("concat_rows: column counts differ, " + to_string(A.shape()) + " vs " +
                         to_string(B.shape()));
    }
    Tensor C(Shape{A.shape()[0] + B.shape()[0], A.shape()[1]});
    std::copy(A.data().begin(), A.data().end(), C.data().begin());
    std::copy(B.data().begin(), B.data().end(), C.data().begin() + static_cast<std::ptrdiff_t>(A.size()));
    const std::size_t ia = a.id, ib = b.id, na = A.size();
    return tape.record(std::move(C), {ia, ib},
                       [ia, ib, na](Tape& t, std::size_t self) {
                           const Tensor& G = t.adjoint(self);
                           if (t.requires_grad(ia)) {
                               Tensor& g = t.accum(ia);
                               for (std::size_t i = 0; i < na; ++i) {
                                   g[i] += G[i];
                               }
                           }
                           if (t.requires_grad(ib)) {
                               Tensor& g = t.accum(ib);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   g[i] += G[na + i];
                               }
                           }
                       },
                       "concat_rows");
}

/// Columns [begin, end) of a matrix.
inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Tensor& A = a.value();
    detail::expect_rank2(A, "slice_cols");
    const std::size_t rows = A.shape()[0], cols = A.shape()[1];
    if (begin >= end || end > cols) {
        throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         std::to_string(cols));
    }
    const std::size_t w = end - begin;
    Tensor C(Shape{rows, w});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(A.data().data() + r * cols + begin, w, C.data().data() + r * w);
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(C), {ia},
                          [ia, rows, cols, begin, w](Tape& t, std::size_t self) {
                              const Tensor& G = t.adjoint(self);
                              Tensor& g = t.accum(ia);
                              for (std::size_t r = 0; r < rows; ++r) {
                                  for (std::size_t j = 0; j < w; ++j) {
                                      g[r * cols + begin + j] += G[r * w + j];
                                  }
                              }
                          },
                          "slice_cols");
}

/// Rows [begin, end) of a matrix.
inline Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    const Tensor& A = a.value();
    detail::expect_rank2(A, "slice_rows");
    const std::size_t rows = A.shape()[0], cols = A.shape()[1];
    if (begin >= end || end > rows) {
        throw ShapeError("slice_rows: bad range [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         std::to_string(rows));
    }
    Tensor C(Shape{end - begin, cols});
    std::copy_n(A.data().data() + begin * cols, (end - begin) * cols, C.data().data());
    const std::size_t ia = a.id, offset = begin * cols;
    return a.tape->record(std::move(C), {ia},
                          [ia, offset](Tape& t, std::size_t self) {
                              const Tensor& G = t.adjoint(self);
                              Tensor& g = t.accum(ia);
                              for (std::size_t i = 0; i < G.size(); ++i) {
                                  g[offset + i] += G[i];
                              }
                          },
                          "slice_rows");
}

/// Matrix transpose.
inline Var transpose(Var a) {
    const Tensor& A = a.value();
    detail::expect_rank2(A, "transpose");
    const std::size_t r = A.shape()[0], c = A.shape()[1];
    Tensor C(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            C[j * r + i] = A[i * c + j];
        }
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(C), {ia},
                          [ia, r, c](Tape& t, std::size_t self) {
                              const Tensor& G = t.adjoint(self);
                              Tensor& g = t.accum(ia);
                              for (std::size_t i = 0; i < r; ++i) {
                                  for (std::size_t j = 0; j < c; ++j) {
                                      g[i * c + j] += G[j * r + i];
                                  }
                              }
                          },
                          "transpose");
}

/// Same values, new shape of equal element count.
inline Var reshape(Var a, Shape shape) {
    Tensor C = a.value().reshaped(std::move(shape));
    const std::size_t ia = a.id;
    return a.tape->record(std::move(C), {ia},
                          [ia](Tape& t, std::size_t self) {
                              const Tensor& G = t.adjoint(self);
                              Tensor& g = t.accum(ia);
                              for (std::size_t i = 0; i < G.size(); ++i) {
                                  g[i] += G[i];
                              }
                          },
                          "reshape");
}

/// Sum of squares of all entries, as a scalar.
inline Var squared_l2(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) {
        s += v * v;
    }
    const std::size_t ia = a.id;
    return a.tape->record(Tensor::scalar(s), {ia},
                          [ia](Tape& t, std::size_t self) {
                              const double g = t.adjoint(self)[0];
                              const Tensor& x = t.value(ia);
                              Tensor& gx = t.accum(ia);
                              for (std::size_t i = 0; i < x.size(); ++i) {
                                  gx[i] += 2.0 * g * x[i];
                              }
                          },
                          "squared_l2");
}

/// One entry per row: out[r] = a[r, cols[r]], as a rank-1 tensor.
inline Var pick(Var a, const std::vector<std::size_t>& cols) {
    const Tensor& A = a.value();
    detail::expect_rank2(A, "pick");
    const std::size_t rows = A.shape()[0], width = A.shape()[1];
    if (cols.size() != rows) {
        throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " + std::to_string(rows) + " rows");
    }
    Tensor C(Shape{rows});
    for (std::size_t r = 0; r < rows; ++r) {
        if (cols[r] >= width) {
            throw ContractError("pick: column " + std::to_string(cols[r]) + " out of range " + std::to_string(width));
        }
        C[r] = A[r * width + cols[r]];
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(C), {ia},
                          [ia, cols, width](Tape& t, std::size_t self) {
                              const Tensor& G = t.adjoint(self);
                              Tensor& g = t.accum(ia);
                              for (std::size_t r = 0; r < cols.size(); ++r) {
                                  g[r * width + cols[r]] += G[r];
                              }
                          },
                          "pick");
}

/// Elman recurrence over precomputed input projections:
/// h_t = tanh(inputs[t] + h_{t-1}·U), h_{-1} = h0. Returns all states as an n×H matrix.
inline Var rnn_tanh(Var inputs, Var recurrent, Var h0) {
    Tape& tape = detail::same_tape(inputs, recurrent, "rnn_tanh");
    detail::same_tape(inputs, h0, "rnn_tanh");
    const Tensor& X = inputs.value();
    const Tensor& U = recurrent.value();
    const Tensor& H0 = h0.value();
    detail::expect_rank2(X, "rnn_tanh");
    detail::expect_rank2(U, "rnn_tanh");
    const std::size_t n = X.shape()[0], hdim = X.shape()[1];
    if (U.shape() != Shape{hdim, hdim} || H0.size() != hdim) {
        throw ShapeError("rnn_tanh: inputs " + to_string(X.shape()) + ", recurrent " + to_string(U.shape()) +
                         ", h0 " + to_string(H0.shape()));
    }
    Tensor Hs(Shape{n, hdim});
    std::vector<double> pre(hdim);
    for (std::size_t t = 0; t < n; ++t) {
        const double* prev = t == 0 ? H0.data().data() : Hs.data().data() + (t - 1) * hdim;
        std::copy_n(X.data().data() + t * hdim, hdim, pre.begin());
        for (std::size_t p = 0; p < hdim; ++p) {
            const double hp = prev[p];
            const double* urow = U.data().data() + p * hdim;
            for (std::size_t j = 0; j < hdim; ++j) {
                pre[j] += hp * urow[j];
            }
        }
        double* out = Hs.data().data() + t * hdim;
        for (std::size_t j = 0; j < hdim; ++j) {
            out[j] = std::tanh(pre[j]);
        }
    }
    const std::size_t ix = inputs.id, iu = recurrent.id, ih = h0.id;
    return tape.record(
        std::move(Hs), {ix, iu, ih},
        [ix, iu, ih, n, hdim](Tape& t, std::size_t self) {
            const Tensor& G = t.adjoint(self);
            const Tensor& Hv = t.value(self);
            const Tensor& Uv = t.value(iu);
            const Tensor& H0v = t.value(ih);
            const bool want_x = t.requires_grad(ix), want_u = t.requires_grad(iu), want_h = t.requires_grad(ih);
            std::vector<double> carry(hdim, 0.0), dpre(hdim);
            for (std::size_t k = n; k-- > 0;) {
                const double* h = Hv.data().data() + k * hdim;
                for (std::size_t j = 0; j < hdim; ++j) {
                    dpre[j] = (G[k * hdim + j] + carry[j]) * (1.0 - h[j] * h[j]);
                }
                if (want_x) {
                    Tensor& gx = t.accum(ix);
                    for (std::size_t j = 0; j < hdim; ++j) {
                        gx[k * hdim + j] += dpre[j];
                    }
                }
                const double* prev = k == 0 ? H0v.data().data() : Hv.data().data() + (k - 1) * hdim;
                if (want_u) {
                    Tensor& gu = t.accum(iu);
                    for (std::size_t p = 0; p < hdim; ++p) {
                        const double hp = prev[p];
                        double* row = gu.data().data() + p * hdim;
                        for (std::size_t j = 0; j < hdim; ++j) {
                            row[j] += hp * dpre[j];
                        }
                    }
                }
                for (std::size_t p = 0; p < hdim; ++p) {
                    const double* urow = Uv.data().data() + p * hdim;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < hdim; ++j) {
                        acc += urow[j] * dpre[j];
                    }
                    carry[p] = acc;
                }
            }
            if (want_h) {
                Tensor& g0 = t.accum(ih);
                for (std::size_t p = 0; p < hdim; ++p) {
                    g0[p] += carry[p];
                }
            }
        },
        "rnn_tanh");
}

/// Additive attention energies: out[l, j] = Σ_a v[a]·tanh(queries[l, a] + keys[j, a]).
inline Var additive_scores(Var queries, Var keys, Var v) {
    Tape& tape = detail::same_tape(queries, keys, "additive_scores");
    detail::same_tape(queries, v, "additive_scores");
    const Tensor& Q = queries.value();
    const Tensor& K = keys.value();
    const Tensor& Vv = v.value();
    detail::expect_rank2(Q, "additive_scores");
    detail::expect_rank2(K, "additive_scores");
    const std::size_t L = Q.shape()[0], A = Q.shape()[1], J = K.shape()[0];
    if (K.shape()[1] != A || Vv.size() != A) {
        throw ShapeError("additive_scores: queries " + to_string(Q.shape()) + ", keys " + to_string(K.shape()) +
                         ", v " + to_string(Vv.shape()));
    }
    Tensor S(Shape{L, J});
    std::vector<double> act(L * J * A);
    for (std::size_t l = 0; l < L; ++l) {
        const double* q = Q.data().data() + l * A;
        for (std::size_t j = 0; j < J; ++j) {
            const double* k = K.data().data() + j * A;
            double* a = act.data() + (l * J + j) * A;
            double s = 0.0;
            for (std::size_t d = 0; d < A; ++d) {
                a[d] = std::tanh(q[d] + k[d]);
                s += Vv[d] * a[d];
            }
            S[l * J + j] = s;
        }
    }
    const std::size_t iq = queries.id, ik = keys.id, iv = v.id;
    return tape.record(
        std::move(S), {iq, ik, iv},
        [iq, ik, iv, L, A, J, act = std::move(act)](Tape& t, std::size_t self) {
            const Tensor& G = t.adjoint(self);
            const Tensor& Vw = t.value(iv);
            const bool want_q = t.requires_grad(iq), want_k = t.requires_grad(ik), want_v = t.requires_grad(iv);
            Tensor* gq = want_q ? &t.accum(iq) : nullptr;
            Tensor* gk = want_k ? &t.accum(ik) : nullptr;
            Tensor* gv = want_v ? &t.accum(iv) : nullptr;
            for (std::size_t l = 0; l < L; ++l) {
                for (std::size_t j = 0; j < J; ++j) {
                    const double g = G[l * J + j];
                    if (g == 0.0) {
                        continue;
                    }
                    const double* a = act.data() + (l * J + j) * A;
                    for (std::size_t d = 0; d < A; ++d) {
                        const double dpre = g * Vw[d] * (1.0 - a[d] * a[d]);
                        if (gq) {
                            (*gq)[l * A + d] += dpre;
                        }
                        if (gk) {
                            (*gk)[j * A + d] += dpre;
                        }
                        if (gv) {
                            (*gv)[d] += g * a[d];
                        }
                    }
                }
            }
        },
        "additive_scores");
}

} // namespace spi::diff

namespace spi::diff {

/// Primitive kinds reachable through the generic dispatcher.
enum class Primitive {
    matmul,
    add,
    multiply,
    tanh,
    relu,
    softmax,
    log,
    sum,
    mean,
    concat_last,
    squared_l2,
};

/// Uniform entry point over the fixed-arity primitives. gather_rows takes indices and is called directly.
inline Var forward_primitive(Primitive op, std::span<const Var> in) {
    auto arity = [&](std::size_t n) {
        if (in.size() != n) {
            throw ContractError("primitive expects " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
        }
    };
    switch (op) {
        case Primitive::matmul: arity(2); return matmul(in[0], in[1]);
        case Primitive::add: arity(2); return add(in[0], in[1]);
        case Primitive::multiply: arity(2); return multiply(in[0], in[1]);
        case Primitive::tanh: arity(1); return tanh(in[0]);
        case Primitive::relu: arity(1); return relu(in[0]);
        case Primitive::softmax: arity(1); return softmax(in[0]);
        case Primitive::log: arity(1); return log(in[0]);
        case Primitive::sum: arity(1); return sum(in[0]);
        case Primitive::mean: arity(1); return mean(in[0]);
        case Primitive::concat_last: arity(2); return concat_last(in[0], in[1]);
        case Primitive::squared_l2: arity(1); return squared_l2(in[0]);
    }
    throw ContractError("unknown primitive");
}

} // namespace spi::diff
