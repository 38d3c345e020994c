// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cakt/data/corpus.hpp"

namespace cakt::data {

/// Features padded to the longest utterance, with true lengths alongside.
struct UtteranceBatch {
  std::vector<std::string> ids;
  std::vector<Tensor> features;  // each [max_frames, f]
  std::vector<std::size_t> lengths;
  std::vector<ctc::LabelSeq> tokens;

  std::size_t size() const { return ids.size(); }
  /// Unpadded [lengths[i], f] features of utterance i.
  Tensor valid_features(std::size_t i) const;
};

UtteranceBatch make_batch(const std::vector<const Utterance*>& utts);

/// Indices sorted by (frames, id), cut into batches of batch_size, then the
/// batch order is shuffled with a generator derived from (seed, epoch).
std::vector<std::vector<std::size_t>> plan_batches(const std::vector<Utterance>& utts,
                                                   std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch);

}  // namespace cakt::data
