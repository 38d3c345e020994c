// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cakt/ctc/ctc.hpp"
#include "cakt/model/layers.hpp"

namespace cakt::kt {

enum class QueryMode { PositionalOnly, TokenPlusPositional };

/// Offset i pairing teacher token n with student output n + i.
enum class ShiftMode : int { Left = -1, None = 0, Right = 1 };

inline int offset(ShiftMode s) { return static_cast<int>(s); }

std::string to_string(QueryMode m);
std::string to_string(ShiftMode s);
QueryMode parse_query_mode(const std::string& s);
ShiftMode parse_shift_mode(const std::string& s);

struct KtConfig {
  double k = 20.0;
  QueryMode query_mode = QueryMode::TokenPlusPositional;
  ShiftMode shift_mode = ShiftMode::None;
  std::size_t n_heads = 4;

  void validate() const;
};

/// 1-based token positions; 0 and N+1 are BOS/EOS and never appear.
struct AlignedPair {
  std::size_t teacher;
  std::size_t student;
  friend bool operator==(const AlignedPair&, const AlignedPair&) = default;
};

/// {(n, n + i)} for n = 1..N, dropping pairs whose student index leaves 1..N.
std::vector<AlignedPair> align_pairs(std::size_t n_tokens, ShiftMode shift);

/// Query rows for [BOS, y_1..y_N, EOS]. TokenPlusPositional adds the
/// token-embedding row to the sinusoid of its position; PositionalOnly uses
/// the sinusoid alone. The table has vocab_size + 3 rows (BOS = V+1,
/// EOS = V+2).
Var build_queries(Tape& tape, const ctc::LabelSeq& tokens, Var embed_table, QueryMode mode,
                  std::size_t vocab_size);

/// k * sum over pairs of (1 - cos(h_avg[teacher], o[student])). Zero when
/// pairs is empty. Degenerate (zero-norm) rows hit the 1e-12 denominator
/// guard, contribute k, and emit a warning.
Var kt_loss(Tape& tape, const Tensor& teacher_avg, Var outputs,
            const std::vector<AlignedPair>& pairs, double k);

struct KtOutputs {
  Tensor queries;
  Var outputs;
  std::vector<AlignedPair> pairs;
  Var loss;
  std::vector<Tensor> attention;
};

/// Token-dependent knowledge-transfer branch: query embeddings plus one
/// cross-modal multi-head attention layer over the acoustic states.
class KtModule {
 public:
  /// The query table starts as a copy of the teacher token table.
  KtModule(std::size_t vocab_size, std::size_t d_model, const KtConfig& cfg,
           const Tensor& teacher_token_table, std::uint64_t seed);
  KtModule(const KtModule&) = delete;
  KtModule& operator=(const KtModule&) = delete;

  const KtConfig& config() const { return cfg_; }

  KtOutputs forward(Tape& tape, const ctc::LabelSeq& tokens, Var hx, const Tensor& teacher_avg,
                    bool keep_attention = false);

  /// Queries E and attention outputs O without a loss (for inspection).
  Var attend(Tape& tape, const ctc::LabelSeq& tokens, Var hx, std::vector<Tensor>* attention,
             Tensor* queries);

  ParameterList parameters();

 private:
  std::size_t vocab_size_;
  KtConfig cfg_;
  Parameter query_embedding_;
  model::MultiHeadAttention attention_;
};

}  // namespace cakt::kt
