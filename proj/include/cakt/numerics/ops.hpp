// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cakt/numerics/random.hpp"
#include "cakt/numerics/tape.hpp"

namespace cakt::ops {

// Plain (untaped) helpers.

/// Max-shifted log(sum(exp(x))). Throws on empty input.
double logsumexp(std::span<const double> x);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Taped ops. All matrix ops treat rank-0/1 tensors as a single row.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
/// x[r, :] + bias for every row r; bias has cols(x) elements.
Var add_row(Var x, Var bias);
Var relu(Var x);
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
/// Normalizes each row to zero mean / unit (biased) variance, then applies
/// gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Valid 1-D convolution over time. x is [T, f_in], kernel is
/// [width, f_in, f_out]; output has floor((T - width) / stride) + 1 rows.
Var conv1d_strided(Var x, Var kernel, std::size_t stride);
Var sum(Var x);
Var slice_rows(Var x, std::size_t start, std::size_t count);
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(Var x, const std::vector<std::size_t>& rows);
/// Per-row cosine similarity of two equally shaped matrices, as a column.
/// The denominator is max(|a||b|, eps).
Var row_cosine(Var a, Var b, double eps = 1e-12);
Var add_n(const std::vector<Var>& terms);
/// Inverted dropout; identity when rate == 0.
Var dropout(Var x, double rate, Rng& rng);
/// Stops gradient flow: returns a constant copy of x on the same tape.
Var detach(Var x);

std::size_t conv_output_length(std::size_t t_in, std::size_t width, std::size_t stride);

}  // namespace cakt::ops
