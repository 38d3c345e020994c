// SPDX-License-Identifier: Apache-2.0
#include "cakt/numerics/random.hpp"

namespace cakt {

double Rng::normal(double mean, double sd) {
  std::normal_distribution<double> dist(mean, sd);
  return dist(engine_);
}

double Rng::uniform() {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(engine_);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  std::uniform_int_distribution<std::int64_t> dist(lo, hi);
  return dist(engine_);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = base ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor randn(Shape shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, sd);
  return t;
}

}  // namespace cakt
