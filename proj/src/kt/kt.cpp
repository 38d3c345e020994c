// SPDX-License-Identifier: Apache-2.0
#include "cakt/kt/kt.hpp"

#include <cmath>
#include <iostream>

#include "cakt/error.hpp"
#include "cakt/numerics/ops.hpp"

namespace cakt::kt {

namespace {
constexpr double kCosineEps = 1e-12;
}

std::string to_string(QueryMode m) {
  return m == QueryMode::PositionalOnly ? "pos" : "token_pos";
}

std::string to_string(ShiftMode s) {
  switch (s) {
    case ShiftMode::Left:
      return "left";
    case ShiftMode::Right:
      return "right";
    case ShiftMode::None:
      break;
  }
  return "none";
}

QueryMode parse_query_mode(const std::string& s) {
  if (s == "pos") return QueryMode::PositionalOnly;
  if (s == "token_pos") return QueryMode::TokenPlusPositional;
  throw ConfigError("unknown query mode '" + s + "' (expected pos|token_pos)");
}

ShiftMode parse_shift_mode(const std::string& s) {
  if (s == "none" || s == "0") return ShiftMode::None;
  if (s == "left" || s == "-1") return ShiftMode::Left;
  if (s == "right" || s == "1" || s == "+1") return ShiftMode::Right;
  throw ConfigError("unknown shift mode '" + s + "' (expected none|left|right)");
}

void KtConfig::validate() const {
  if (!(k > 0.0)) throw ConfigError("kt scaling k must be > 0");
  if (n_heads == 0) throw ConfigError("kt n_heads must be positive");
}

std::vector<AlignedPair> align_pairs(std::size_t n_tokens, ShiftMode shift) {
  std::vector<AlignedPair> pairs;
  const long n_max = static_cast<long>(n_tokens);
  for (long n = 1; n <= n_max; ++n) {
    const long m = n + offset(shift);
    if (m < 1 || m > n_max) continue;
    pairs.push_back({static_cast<std::size_t>(n), static_cast<std::size_t>(m)});
  }
  return pairs;
}

Var build_queries(Tape& tape, const ctc::LabelSeq& tokens, Var embed_table, QueryMode mode,
                  std::size_t vocab_size) {
  const std::size_t d = embed_table.cols();
  if (embed_table.rows() < vocab_size + 3) {
    throw ShapeError("query table has " + std::to_string(embed_table.rows()) + " rows, needs " +
                     std::to_string(vocab_size + 3));
  }
  std::vector<std::size_t> ids{vocab_size + 1};
  for (int y : tokens) {
    if (y < 1 || static_cast<std::size_t>(y) > vocab_size) {
      throw DataError("kt: unknown token id " + std::to_string(y));
    }
    ids.push_back(static_cast<std::size_t>(y));
  }
  ids.push_back(vocab_size + 2);
  Var positions = tape.constant(model::sinusoid_table(ids.size(), d));
  if (mode == QueryMode::PositionalOnly) return positions;
  return ops::add(ops::gather_rows(embed_table, ids), positions);
}

Var kt_loss(Tape& tape, const Tensor& teacher_avg, Var outputs,
            const std::vector<AlignedPair>& pairs, double k) {
  if (pairs.empty()) return tape.constant(Tensor::scalar(0.0));
  if (teacher_avg.cols() != outputs.cols()) {
    throw ShapeError("kt_loss: teacher width " + std::to_string(teacher_avg.cols()) +
                     " differs from output width " + std::to_string(outputs.cols()));
  }
  std::vector<std::size_t> teacher_rows, student_rows;
  for (const auto& p : pairs) {
    if (p.teacher >= teacher_avg.rows() || p.student >= outputs.rows()) {
      throw ShapeError("kt_loss: pair index out of range");
    }
    teacher_rows.push_back(p.teacher);
    student_rows.push_back(p.student);
  }
  Var h = ops::gather_rows(tape.constant(teacher_avg), teacher_rows);
  Var o = ops::gather_rows(outputs, student_rows);
  for (std::size_t r = 0; r < h.rows(); ++r) {
    double hh = 0.0, oo = 0.0;
    for (double v : h.value().row(r)) hh += v * v;
    for (double v : o.value().row(r)) oo += v * v;
    if (std::sqrt(hh) * std::sqrt(oo) <= kCosineEps) {
      std::cerr << "warning: kt_loss pair (" << pairs[r].teacher << ", " << pairs[r].student
                << ") has a zero-norm vector; cosine guarded\n";
    }
  }
  Var cos = ops::row_cosine(h, o, kCosineEps);
  Var one_minus = ops::add_scalar(ops::scale(ops::sum(cos), -1.0), static_cast<double>(pairs.size()));
  return ops::scale(one_minus, k);
}

KtModule::KtModule(std::size_t vocab_size, std::size_t d_model, const KtConfig& cfg,
                   const Tensor& teacher_token_table, std::uint64_t seed)
    : vocab_size_(vocab_size),
      cfg_(cfg),
      query_embedding_("kt.query_embedding", teacher_token_table),
      attention_("kt.attn", d_model, cfg.n_heads, derive_seed(seed, "kt")) {
  cfg_.validate();
  if (teacher_token_table.rows() != vocab_size + 3 || teacher_token_table.cols() != d_model) {
    throw ShapeError("kt: teacher token table must be [V+3, d_model]");
  }
}

Var KtModule::attend(Tape& tape, const ctc::LabelSeq& tokens, Var hx,
                     std::vector<Tensor>* attention, Tensor* queries) {
  Var e = build_queries(tape, tokens, tape.leaf(query_embedding_), cfg_.query_mode, vocab_size_);
  if (queries) *queries = e.value();
  return attention_.forward(tape, e, hx, attention);
}

KtOutputs KtModule::forward(Tape& tape, const ctc::LabelSeq& tokens, Var hx,
                            const Tensor& teacher_avg, bool keep_attention) {
  KtOutputs out;
  out.outputs = attend(tape, tokens, hx, keep_attention ? &out.attention : nullptr, &out.queries);
  if (teacher_avg.rows() != tokens.size() + 2) {
    throw ShapeError("kt: teacher states have " + std::to_string(teacher_avg.rows()) +
                     " rows for " + std::to_string(tokens.size()) + " tokens");
  }
  out.pairs = align_pairs(tokens.size(), cfg_.shift_mode);
  out.loss = kt_loss(tape, teacher_avg, out.outputs, out.pairs, cfg_.k);
  return out;
}

ParameterList KtModule::parameters() {
  ParameterList out{&query_embedding_};
  for (auto* p : attention_.parameters()) out.push_back(p);
  return out;
}

}  // namespace cakt::kt
