// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cakt/numerics/parameter.hpp"
#include "cakt/numerics/random.hpp"
#include "cakt/numerics/tape.hpp"

namespace cakt::model {

/// Absolute sinusoidal position table [positions, d]:
/// even column 2i holds sin(pos / 10000^(2i/d)), odd column 2i+1 the cosine.
Tensor sinusoid_table(std::size_t positions, std::size_t d);

/// Multi-head scaled dot-product attention with learned Q/K/V/output
/// projections. Queries and keys/values may come from different sequences.
class MultiHeadAttention {
 public:
  MultiHeadAttention(const std::string& prefix, std::size_t d_model, std::size_t n_heads, Rng& rng);
  MultiHeadAttention(const std::string& prefix, std::size_t d_model, std::size_t n_heads,
                     std::uint64_t seed);
  MultiHeadAttention(const MultiHeadAttention&) = delete;
  MultiHeadAttention& operator=(const MultiHeadAttention&) = delete;

  /// Returns one output row per query row. When weights is non-null it
  /// receives the [queries, keys] attention matrix of every head.
  Var forward(Tape& tape, Var queries, Var keys_values, std::vector<Tensor>* weights = nullptr);

  ParameterList parameters();
  std::size_t n_heads() const { return n_heads_; }

 private:
  std::size_t d_model_;
  std::size_t n_heads_;
  Parameter wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
};

/// Pre-norm residual block: x + Attn(LN(x)), then x + FFN(LN(x)) with a
/// ReLU feed-forward.
class TransformerBlock {
 public:
  TransformerBlock(const std::string& prefix, std::size_t d_model, std::size_t n_heads,
                   std::size_t ffn_dim, Rng& rng);
  TransformerBlock(const TransformerBlock&) = delete;
  TransformerBlock& operator=(const TransformerBlock&) = delete;

  Var forward(Tape& tape, Var x, double dropout_rate = 0.0, Rng* dropout_rng = nullptr);
  ParameterList parameters();

 private:
  Parameter ln1_gain_, ln1_bias_;
  MultiHeadAttention attention_;
  Parameter ln2_gain_, ln2_bias_;
  Parameter w1_, b1_, w2_, b2_;
};

/// Weight initialised N(0, 1/fan_in).
Parameter dense_weight(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng);
Parameter zeros(const std::string& name, Shape shape);
Parameter ones(const std::string& name, Shape shape);

}  // namespace cakt::model
