// SPDX-License-Identifier: Apache-2.0
#include "cakt/data/batching.hpp"

#include <algorithm>
#include <numeric>

#include "cakt/error.hpp"
#include "cakt/numerics/random.hpp"

namespace cakt::data {

Tensor UtteranceBatch::valid_features(std::size_t i) const {
  const Tensor& padded = features[i];
  const std::size_t f = padded.cols();
  std::vector<double> d(padded.data().begin(),
                        padded.data().begin() + static_cast<std::ptrdiff_t>(lengths[i] * f));
  return Tensor(Shape{lengths[i], f}, std::move(d));
}

UtteranceBatch make_batch(const std::vector<const Utterance*>& utts) {
  if (utts.empty()) throw DataError("empty batch");
  std::size_t max_frames = 0;
  for (const auto* u : utts) max_frames = std::max(max_frames, u->frames);
  UtteranceBatch b;
  for (const auto* u : utts) {
    Tensor padded = Tensor::matrix(max_frames, u->dim);
    for (std::size_t i = 0; i < u->features.size(); ++i) padded[i] = u->features[i];
    b.ids.push_back(u->id);
    b.features.push_back(std::move(padded));
    b.lengths.push_back(u->frames);
    b.tokens.push_back(u->tokens);
  }
  return b;
}

std::vector<std::vector<std::size_t>> plan_batches(const std::vector<Utterance>& utts,
                                                   std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(utts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (utts[a].frames != utts[b].frames) return utts[a].frames < utts[b].frames;
    return utts[a].id < utts[b].id;
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(i + batch_size, order.size())));
  }
  Rng rng(derive_seed(seed, "batches:" + std::to_string(epoch)));
  // Fisher-Yates with our own draws; std::shuffle's algorithm is unspecified
  for (std::size_t i = batches.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(batches[i - 1], batches[j]);
  }
  return batches;
}

}  // namespace cakt::data
