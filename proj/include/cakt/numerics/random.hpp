// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "cakt/numerics/tensor.hpp"

namespace cakt {

/// Seeded generator; every stochastic component owns one so that streams do
/// not interfere (building the KT branch must not shift encoder init).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double sd = 1.0);
  double uniform();
  /// Inclusive range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a component tag into a base seed (splitmix64 over FNV-1a).
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

Tensor randn(Shape shape, double sd, Rng& rng);

}  // namespace cakt
