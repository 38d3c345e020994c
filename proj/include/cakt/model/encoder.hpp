// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cakt/model/layers.hpp"

namespace cakt::model {

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t conv_width = 3;
  std::size_t conv_stride = 2;
  std::size_t feat_dim = 20;
  std::size_t vocab_size = 16;
  double dropout_rate = 0.0;

  void validate() const;
  /// Encoder frames produced from t_raw input frames (0 if too short).
  std::size_t output_frames(std::size_t t_raw) const;
  /// V + 1 output classes, blank at 0.
  std::size_t classes() const { return vocab_size + 1; }
};

/// Stand-in for the wav2vec2.0 + CTC branch: strided conv front-end,
/// additive sinusoidal positions, pre-norm transformer stack, a distinct
/// final layer norm, and a linear + log-softmax classifier.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, std::uint64_t seed);
  Encoder(const Encoder&) = delete;
  Encoder& operator=(const Encoder&) = delete;

  const EncoderConfig& config() const { return cfg_; }

  /// H^X for one utterance: [output_frames(T_raw), d_model].
  Var encode(Tape& tape, const Tensor& features, Rng* dropout_rng = nullptr);
  /// Log posteriors [T, V+1] from H^X.
  Var ctc_head(Tape& tape, Var hx);

  /// Column v (1..V) of the output projection is set to row v of the
  /// table; the blank column is zeroed. No-op unless cols == d_model.
  bool init_output_from_embeddings(const Tensor& token_table);

  void set_conv_frozen(bool frozen);
  void set_transformer_frozen(bool frozen);

  ParameterList parameters();
  ParameterList conv_parameters();
  ParameterList transformer_parameters();
  ParameterList head_parameters();

 private:
  EncoderConfig cfg_;
  Parameter conv_kernel_;
  std::vector<std::unique_ptr<TransformerBlock>> layers_;
  Parameter final_gain_, final_bias_;
  Parameter out_weight_, out_bias_;
};

}  // namespace cakt::model
