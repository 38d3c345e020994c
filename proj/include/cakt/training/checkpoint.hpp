// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cakt/numerics/parameter.hpp"
#include "cakt/training/optimizer.hpp"

namespace cakt::training {

using TensorMap = std::map<std::string, Tensor>;

struct Checkpoint {
  enum class Kind : std::uint8_t { Training = 1, Inference = 2 };

  Kind kind = Kind::Training;
  /// Canonical run configuration text and its SHA-256 (hex).
  std::string config_text;
  std::string fingerprint;
  std::uint64_t updates = 0;
  std::uint64_t epoch = 0;
  double dev_loss = 0.0;
  double dev_cer = 0.0;
  TensorMap params;
  /// "m/<param>", "v/<param>" moments and "t/<param>" step counts.
  TensorMap optimizer;
};

/// Lowercase hex SHA-256 of the text.
std::string fingerprint(const std::string& text);

/// Versioned little-endian binary container:
/// "CAKTCKPT", u32 version, u8 kind, header fields, then named blobs
/// (name, rank, dims, f64 data).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

TensorMap snapshot(const ParameterList& params);
/// Copies values into params by name. Every parameter must be present with
/// a matching shape; extra entries are ignored.
void restore(const ParameterList& params, const TensorMap& values);

TensorMap optimizer_state(const Adam& adam);
void load_optimizer_state(Adam& adam, const TensorMap& state);

/// Per-parameter arithmetic mean. Throws ConfigError when fingerprints or
/// parameter sets differ. Header fields come from the first checkpoint and
/// the optimizer state is dropped.
Checkpoint average_checkpoints(const std::vector<const Checkpoint*>& ckpts);

/// Inference artifact: only the CTC branch ("encoder.*") is kept.
Checkpoint export_inference_model(const Checkpoint& ckpt);

}  // namespace cakt::training
