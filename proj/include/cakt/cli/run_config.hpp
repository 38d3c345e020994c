// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cakt/data/corpus.hpp"
#include "cakt/training/trainer.hpp"

namespace cakt::cli {

/// Everything that shapes a run, as one flat namespace of keys:
///
///   vocab_size, feat_dim, d_model        shared by data, student and teacher
///   data.*, encoder.*, teacher.*, kt.*, train.*
///
/// Serialised as "key = value" lines; '#' starts a comment.
struct RunConfig {
  data::SynthConfig synth;
  training::ModelConfig model;
  training::TrainConfig train;

  RunConfig();

  /// Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  void validate() const;

  /// Every key in a fixed order with its value in shortest round-trip form.
  std::string canonical_text() const;
  std::string fingerprint() const;

  data::FrameGeometry geometry() const;

  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Applies "key=value" overrides in order.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments);

}  // namespace cakt::cli
