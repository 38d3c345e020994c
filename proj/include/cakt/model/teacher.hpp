// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cakt/ctc/ctc.hpp"
#include "cakt/model/layers.hpp"

namespace cakt::model {

enum class TeacherMode {
  /// Seeded random bidirectional transformer.
  Random,
  /// Averaged states are one-hot token vectors smoothed with their
  /// neighbours (0.7 self, 0.15 left, 0.15 right).
  Oracle,
};

struct TeacherConfig {
  std::size_t d_teacher = 64;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  /// Gold-token vocabulary V; the table adds blank, BOS (V+1) and EOS (V+2).
  std::size_t vocab_size = 16;
  std::size_t max_positions = 64;
  std::uint64_t seed = 7;
  TeacherMode mode = TeacherMode::Random;

  std::size_t table_size() const { return vocab_size + 3; }
  std::size_t bos_id() const { return vocab_size + 1; }
  std::size_t eos_id() const { return vocab_size + 2; }
};

/// Per-layer states H^Y_0..H^Y_L, each [N+2, d]; rows 0 and N+1 belong to the
/// BOS/EOS analogues, row n to token y_n.
struct TeacherStates {
  std::vector<Tensor> layers;
  Tensor average;
};

/// Elementwise mean over all layers, layer 0 included.
Tensor layer_average(const std::vector<Tensor>& layers);

/// Frozen language-model stand-in producing contextual token states.
class Teacher {
 public:
  explicit Teacher(const TeacherConfig& cfg);
  Teacher(const Teacher&) = delete;
  Teacher& operator=(const Teacher&) = delete;

  const TeacherConfig& config() const { return cfg_; }
  TeacherStates encode(const ctc::LabelSeq& tokens);
  const Tensor& token_embeddings() const { return token_embedding_.value(); }
  ParameterList parameters();

 private:
  TeacherStates encode_oracle(const ctc::LabelSeq& tokens) const;

  TeacherConfig cfg_;
  Parameter token_embedding_;
  Parameter position_embedding_;
  std::vector<std::unique_ptr<TransformerBlock>> layers_;
};

/// Builds a frozen teacher; its width must equal the student's d_model
/// because no projection sits between the two.
std::unique_ptr<Teacher> build_teacher(const TeacherConfig& cfg, std::size_t student_d_model);

}  // namespace cakt::model
