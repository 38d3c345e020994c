// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cakt/ctc/ctc.hpp"
#include "cakt/numerics/tensor.hpp"

namespace cakt::data {

/// id <-> glyph table. 0 is the CTC blank, 1..V are tokens rendered as
/// letters ("t<id>" past 26), V+1 / V+2 are BOS / EOS.
class Vocab {
 public:
  explicit Vocab(std::size_t size = 16);

  std::size_t size() const { return size_; }
  int bos() const { return static_cast<int>(size_) + 1; }
  int eos() const { return static_cast<int>(size_) + 2; }

  std::string glyph(int id) const;
  int id_of(const std::string& glyph) const;
  /// Space-separated glyphs, e.g. {1, 1, 2} -> "a a b".
  std::string render(const ctc::LabelSeq& tokens) const;

  std::string to_json() const;
  static Vocab from_json(const std::string& text);

 private:
  std::size_t size_;
};

struct Utterance {
  std::string id;
  std::size_t frames = 0;
  std::size_t dim = 0;
  /// Row-major [frames, dim], stored in single precision.
  std::vector<float> features;
  ctc::LabelSeq tokens;

  /// Exact promotion to double.
  Tensor feature_tensor() const;
};

struct SynthConfig {
  std::size_t vocab_size = 16;
  std::size_t f_in = 20;
  std::size_t frames_min = 2;
  std::size_t frames_max = 5;
  double noise_sigma = 0.1;
  double silence_prob = 0.1;
  std::size_t n_train = 800;
  std::size_t n_dev = 100;
  std::size_t n_test = 100;
  std::size_t seq_len_min = 3;
  std::size_t seq_len_max = 10;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Subsampling geometry of the encoder that will consume the corpus.
struct FrameGeometry {
  std::size_t conv_width = 3;
  std::size_t conv_stride = 2;

  std::size_t encoder_frames(std::size_t raw) const;
};

struct Corpus {
  std::vector<Utterance> train, dev, test;
  /// [V+1, f_in]; row v is the unit-norm prototype of token v (row 0 unused).
  Tensor prototypes;
  Vocab vocab;
};

/// Draws one unit-norm prototype per token, then renders each utterance as
/// its token sequence with every token's prototype repeated r times
/// (r uniform in [frames_min, frames_max]) plus N(0, noise_sigma) noise.
/// Before each token and at the end a silence segment of pure noise is
/// inserted with probability silence_prob. Draws that would be
/// CTC-infeasible after subsampling are redrawn.
///
/// Throws ConfigError when even the longest rendering of the longest
/// sequence cannot be feasible.
Corpus generate_corpus(const SynthConfig& cfg, const FrameGeometry& geometry = {});

/// One JSON object per line:
/// {"id", "tokens", "features_b64", "T", "f"}; features are little-endian
/// float32, row-major, base64-encoded.
void write_manifest(const std::filesystem::path& path, const std::vector<Utterance>& utts);
std::vector<Utterance> read_manifest(const std::filesystem::path& path);

std::string encode_features(const std::vector<float>& values);
std::vector<float> decode_features(const std::string& b64);

}  // namespace cakt::data
