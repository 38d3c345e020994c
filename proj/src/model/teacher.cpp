// SPDX-License-Identifier: Apache-2.0
#include "cakt/model/teacher.hpp"

#include <cmath>

#include "cakt/error.hpp"
#include "cakt/numerics/ops.hpp"

namespace cakt::model {

Tensor layer_average(const std::vector<Tensor>& layers) {
  if (layers.empty()) throw Error("layer_average needs at least one layer");
  // first + mean(layer - first): exact when all layers coincide
  const Tensor& first = layers[0];
  Tensor delta(first.shape(), 0.0);
  for (const auto& l : layers) {
    if (l.shape() != first.shape()) throw ShapeError("layer_average: layer shapes differ");
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += l[i] - first[i];
  }
  const double n = static_cast<double>(layers.size());
  Tensor avg = first;
  for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += delta[i] / n;
  return avg;
}

Teacher::Teacher(const TeacherConfig& cfg) : cfg_(cfg) {
  const std::size_t d = cfg_.d_teacher;
  if (d == 0 || cfg_.n_heads == 0 || d % cfg_.n_heads != 0) {
    throw ConfigError("teacher width must be positive and divisible by its heads");
  }
  Rng rng(derive_seed(cfg_.seed, "teacher"));
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  if (cfg_.mode == TeacherMode::Oracle) {
    if (cfg_.table_size() > d) {
      throw ConfigError("oracle teacher needs d_teacher >= vocab_size + 3 for one-hot rows");
    }
    Tensor table = Tensor::matrix(cfg_.table_size(), d);
    for (std::size_t v = 0; v < cfg_.table_size(); ++v) table(v, v) = 1.0;
    token_embedding_ = Parameter("teacher.token_embedding", std::move(table), true);
  } else {
    token_embedding_ =
        Parameter("teacher.token_embedding", randn({cfg_.table_size(), d}, sd, rng), true);
  }
  position_embedding_ =
      Parameter("teacher.position_embedding", randn({cfg_.max_positions, d}, sd, rng), true);
  layers_.reserve(cfg_.n_layers);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    layers_.push_back(std::make_unique<TransformerBlock>("teacher.layer" + std::to_string(l), d,
                                                         cfg_.n_heads, 2 * d, rng));
    for (auto* p : layers_.back()->parameters()) p->set_frozen(true);
  }
}

TeacherStates Teacher::encode(const ctc::LabelSeq& tokens) {
  if (tokens.empty()) throw DataError("teacher: empty token sequence");
  for (int y : tokens) {
    if (y < 1 || static_cast<std::size_t>(y) > cfg_.vocab_size) {
      throw DataError("teacher: token id " + std::to_string(y) + " outside vocabulary 1.." +
                      std::to_string(cfg_.vocab_size));
    }
  }
  if (tokens.size() + 2 > cfg_.max_positions) {
    throw DataError("teacher: sequence of " + std::to_string(tokens.size()) +
                    " tokens exceeds max_positions");
  }
  if (cfg_.mode == TeacherMode::Oracle) return encode_oracle(tokens);

  std::vector<std::size_t> ids{cfg_.bos_id()};
  for (int y : tokens) ids.push_back(static_cast<std::size_t>(y));
  ids.push_back(cfg_.eos_id());
  std::vector<std::size_t> positions(ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;

  Tape tape;
  Var h = ops::add(ops::gather_rows(tape.leaf(token_embedding_), ids),
                   ops::gather_rows(tape.leaf(position_embedding_), positions));
  TeacherStates out;
  out.layers.push_back(h.value());
  for (auto& layer : layers_) {
    h = layer->forward(tape, h);
    out.layers.push_back(h.value());
  }
  out.average = layer_average(out.layers);
  return out;
}

TeacherStates Teacher::encode_oracle(const ctc::LabelSeq& tokens) const {
  std::vector<std::size_t> ids{cfg_.bos_id()};
  for (int y : tokens) ids.push_back(static_cast<std::size_t>(y));
  ids.push_back(cfg_.eos_id());
  const Tensor& table = token_embedding_.value();
  const std::size_t d = cfg_.d_teacher;
  Tensor smoothed = Tensor::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      double v = 0.7 * table(ids[i], c);
      if (i > 0) v += 0.15 * table(ids[i - 1], c);
      if (i + 1 < ids.size()) v += 0.15 * table(ids[i + 1], c);
      smoothed(i, c) = v;
    }
  }
  TeacherStates out;
  out.layers.push_back(smoothed);
  out.average = std::move(smoothed);
  return out;
}

ParameterList Teacher::parameters() {
  ParameterList out{&token_embedding_, &position_embedding_};
  for (auto& layer : layers_)
    for (auto* p : layer->parameters()) out.push_back(p);
  return out;
}

std::unique_ptr<Teacher> build_teacher(const TeacherConfig& cfg, std::size_t student_d_model) {
  if (cfg.d_teacher != student_d_model) {
    throw ConfigError("teacher width " + std::to_string(cfg.d_teacher) +
                      " differs from student d_model " + std::to_string(student_d_model));
  }
  return std::make_unique<Teacher>(cfg);
}

}  // namespace cakt::model
