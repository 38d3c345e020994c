// SPDX-License-Identifier: Apache-2.0
#include "cakt/model/layers.hpp"

#include <cmath>
#include <memory>

#include "cakt/error.hpp"
#include "cakt/numerics/ops.hpp"

namespace cakt::model {

Tensor sinusoid_table(std::size_t positions, std::size_t d) {
  Tensor t = Tensor::matrix(positions, d);
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * freq;
      t(pos, i) = std::sin(angle);
      if (i + 1 < d) t(pos, i + 1) = std::cos(angle);
    }
  }
  return t;
}

Parameter dense_weight(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return Parameter(name, randn({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
}

Parameter zeros(const std::string& name, Shape shape) {
  return Parameter(name, Tensor(std::move(shape), 0.0));
}

Parameter ones(const std::string& name, Shape shape) {
  return Parameter(name, Tensor(std::move(shape), 1.0));
}

MultiHeadAttention::MultiHeadAttention(const std::string& prefix, std::size_t d_model,
                                       std::size_t n_heads, Rng& rng)
    : d_model_(d_model),
      n_heads_(n_heads),
      wq_(dense_weight(prefix + ".wq", d_model, d_model, rng)),
      bq_(zeros(prefix + ".bq", {d_model})),
      wk_(dense_weight(prefix + ".wk", d_model, d_model, rng)),
      bk_(zeros(prefix + ".bk", {d_model})),
      wv_(dense_weight(prefix + ".wv", d_model, d_model, rng)),
      bv_(zeros(prefix + ".bv", {d_model})),
      wo_(dense_weight(prefix + ".wo", d_model, d_model, rng)),
      bo_(zeros(prefix + ".bo", {d_model})) {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by " +
                      std::to_string(n_heads) + " heads");
  }
}

MultiHeadAttention::MultiHeadAttention(const std::string& prefix, std::size_t d_model,
                                       std::size_t n_heads, std::uint64_t seed)
    : MultiHeadAttention(prefix, d_model, n_heads, *std::make_unique<Rng>(seed)) {}

Var MultiHeadAttention::forward(Tape& tape, Var queries, Var keys_values,
                                std::vector<Tensor>* weights) {
  if (queries.cols() != d_model_ || keys_values.cols() != d_model_) {
    throw ShapeError("attention expects " + std::to_string(d_model_) + " columns, got " +
                     std::to_string(queries.cols()) + " and " + std::to_string(keys_values.cols()));
  }
  Var q = ops::add_row(ops::matmul(queries, tape.leaf(wq_)), tape.leaf(bq_));
  Var k = ops::add_row(ops::matmul(keys_values, tape.leaf(wk_)), tape.leaf(bk_));
  Var v = ops::add_row(ops::matmul(keys_values, tape.leaf(wv_)), tape.leaf(bv_));
  const std::size_t dh = d_model_ / n_heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(n_heads_);
  if (weights) weights->clear();
  for (std::size_t h = 0; h < n_heads_; ++h) {
    Var qh = ops::slice_cols(q, h * dh, dh);
    Var kh = ops::slice_cols(k, h * dh, dh);
    Var vh = ops::slice_cols(v, h * dh, dh);
    Var a = ops::softmax_rows(ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt));
    if (weights) weights->push_back(a.value());
    heads.push_back(ops::matmul(a, vh));
  }
  Var merged = n_heads_ == 1 ? heads[0] : ops::concat_cols(heads);
  return ops::add_row(ops::matmul(merged, tape.leaf(wo_)), tape.leaf(bo_));
}

ParameterList MultiHeadAttention::parameters() {
  return {&wq_, &bq_, &wk_, &bk_, &wv_, &bv_, &wo_, &bo_};
}

TransformerBlock::TransformerBlock(const std::string& prefix, std::size_t d_model,
                                   std::size_t n_heads, std::size_t ffn_dim, Rng& rng)
    : ln1_gain_(ones(prefix + ".ln1.gain", {d_model})),
      ln1_bias_(zeros(prefix + ".ln1.bias", {d_model})),
      attention_(prefix + ".attn", d_model, n_heads, rng),
      ln2_gain_(ones(prefix + ".ln2.gain", {d_model})),
      ln2_bias_(zeros(prefix + ".ln2.bias", {d_model})),
      w1_(dense_weight(prefix + ".ffn.w1", d_model, ffn_dim, rng)),
      b1_(zeros(prefix + ".ffn.b1", {ffn_dim})),
      w2_(dense_weight(prefix + ".ffn.w2", ffn_dim, d_model, rng)),
      b2_(zeros(prefix + ".ffn.b2", {d_model})) {}

Var TransformerBlock::forward(Tape& tape, Var x, double dropout_rate, Rng* dropout_rng) {
  auto drop = [&](Var v) {
    return dropout_rng && dropout_rate > 0.0 ? ops::dropout(v, dropout_rate, *dropout_rng) : v;
  };
  Var h = ops::layer_norm(x, tape.leaf(ln1_gain_), tape.leaf(ln1_bias_));
  x = ops::add(x, drop(attention_.forward(tape, h, h)));
  h = ops::layer_norm(x, tape.leaf(ln2_gain_), tape.leaf(ln2_bias_));
  Var f = ops::relu(ops::add_row(ops::matmul(h, tape.leaf(w1_)), tape.leaf(b1_)));
  f = ops::add_row(ops::matmul(f, tape.leaf(w2_)), tape.leaf(b2_));
  return ops::add(x, drop(f));
}

ParameterList TransformerBlock::parameters() {
  ParameterList out{&ln1_gain_, &ln1_bias_};
  for (auto* p : attention_.parameters()) out.push_back(p);
  for (auto* p : {&ln2_gain_, &ln2_bias_, &w1_, &b1_, &w2_, &b2_}) out.push_back(p);
  return out;
}

}  // namespace cakt::model
