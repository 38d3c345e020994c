// SPDX-License-Identifier: Apache-2.0
#include "cakt/model/encoder.hpp"

#include <cmath>

#include "cakt/error.hpp"
#include "cakt/numerics/ops.hpp"

namespace cakt::model {

void EncoderConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || ffn_dim == 0 || conv_width == 0 ||
      conv_stride == 0 || feat_dim == 0 || vocab_size == 0) {
    throw ConfigError("encoder config values must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must be in [0, 1)");
}

std::size_t EncoderConfig::output_frames(std::size_t t_raw) const {
  return ops::conv_output_length(t_raw, conv_width, conv_stride);
}

Encoder::Encoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, "encoder"));
  const double conv_sd = 1.0 / std::sqrt(static_cast<double>(cfg_.conv_width * cfg_.feat_dim));
  conv_kernel_ = Parameter("encoder.conv.kernel",
                           randn({cfg_.conv_width, cfg_.feat_dim, cfg_.d_model}, conv_sd, rng));
  layers_.reserve(cfg_.n_layers);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    layers_.push_back(std::make_unique<TransformerBlock>("encoder.layer" + std::to_string(l),
                                                         cfg_.d_model, cfg_.n_heads, cfg_.ffn_dim,
                                                         rng));
  }
  final_gain_ = ones("encoder.final_ln.gain", {cfg_.d_model});
  final_bias_ = zeros("encoder.final_ln.bias", {cfg_.d_model});
  out_weight_ = dense_weight("encoder.head.weight", cfg_.d_model, cfg_.classes(), rng);
  out_bias_ = zeros("encoder.head.bias", {cfg_.classes()});
}

Var Encoder::encode(Tape& tape, const Tensor& features, Rng* dropout_rng) {
  if (features.cols() != cfg_.feat_dim) {
    throw ShapeError("encoder expects " + std::to_string(cfg_.feat_dim) + " features, got " +
                     std::to_string(features.cols()));
  }
  if (features.rows() < cfg_.conv_width) {
    throw ShapeError("input of " + std::to_string(features.rows()) +
                     " frames is shorter than conv width " + std::to_string(cfg_.conv_width));
  }
  Var x = ops::conv1d_strided(tape.constant(features), tape.leaf(conv_kernel_), cfg_.conv_stride);
  x = ops::add(x, tape.constant(sinusoid_table(x.rows(), cfg_.d_model)));
  for (auto& layer : layers_) x = layer->forward(tape, x, cfg_.dropout_rate, dropout_rng);
  return ops::layer_norm(x, tape.leaf(final_gain_), tape.leaf(final_bias_));
}

Var Encoder::ctc_head(Tape& tape, Var hx) {
  if (hx.cols() != cfg_.d_model) throw ShapeError("ctc_head: H^X width differs from d_model");
  Var logits = ops::add_row(ops::matmul(hx, tape.leaf(out_weight_)), tape.leaf(out_bias_));
  return ops::log_softmax_rows(logits);
}

bool Encoder::init_output_from_embeddings(const Tensor& token_table) {
  if (token_table.cols() != cfg_.d_model || token_table.rows() <= cfg_.vocab_size) return false;
  auto& w = out_weight_.mutable_value();
  for (std::size_t r = 0; r < cfg_.d_model; ++r) {
    w(r, 0) = 0.0;
    for (std::size_t v = 1; v <= cfg_.vocab_size; ++v) w(r, v) = token_table(v, r);
  }
  return true;
}

void Encoder::set_conv_frozen(bool frozen) { conv_kernel_.set_frozen(frozen); }

void Encoder::set_transformer_frozen(bool frozen) {
  for (auto* p : transformer_parameters()) p->set_frozen(frozen);
}

ParameterList Encoder::conv_parameters() { return {&conv_kernel_}; }

ParameterList Encoder::transformer_parameters() {
  ParameterList out;
  for (auto& layer : layers_)
    for (auto* p : layer->parameters()) out.push_back(p);
  return out;
}

ParameterList Encoder::head_parameters() {
  return {&final_gain_, &final_bias_, &out_weight_, &out_bias_};
}

ParameterList Encoder::parameters() {
  ParameterList out = conv_parameters();
  for (auto* p : transformer_parameters()) out.push_back(p);
  for (auto* p : head_parameters()) out.push_back(p);
  return out;
}

}  // namespace cakt::model
