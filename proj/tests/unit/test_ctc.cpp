// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "cakt/ctc/ctc.hpp"
#include "cakt/error.hpp"
#include "cakt/numerics/ops.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cakt;
using namespace cakt::ctc;

namespace {

Tensor random_log_post(Rng& rng, std::size_t T, std::size_t classes) {
  return ops::log_softmax_rows(randn({T, classes}, 1.5, rng));
}

LabelSeq random_labels(Rng& rng, std::size_t n, int vocab) {
  LabelSeq y(n);
  for (auto& v : y) v = static_cast<int>(rng.uniform_int(1, vocab));
  return y;
}

}  // namespace

TEST_CASE("hand-derived two-frame instance") {
  const double h = std::log(0.5);
  Tensor lp = Tensor::from_rows({{h, h}, {h, h}});
  const double expected = -std::log(0.75);
  CHECK(std::abs(ctc_loss_value(lp, {1}) - expected) < 1e-10);
  CHECK(std::abs(ctc_oracle(lp, {1}) - expected) < 1e-10);
  CHECK(ctc_loss_value(lp, {1}) == doctest::Approx(0.287682).epsilon(1e-6));
}

TEST_CASE("certain single frame has zero loss") {
  Tensor lp = Tensor::from_rows({{-1e300, 0.0}});
  // one-hot on token 1; the blank column is effectively log 0
  CHECK(ctc_loss_value(lp, {1}) == doctest::Approx(0.0).epsilon(1e-300));
}

TEST_CASE("forward recursion agrees with exhaustive enumeration") {
  Rng rng(11);
  for (int seed = 0; seed < 100; ++seed) {
    const auto V = static_cast<int>(rng.uniform_int(1, 3));
    const auto T = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto N = static_cast<std::size_t>(rng.uniform_int(1, 3));
    LabelSeq y = random_labels(rng, N, V);
    Tensor lp = random_log_post(rng, T, static_cast<std::size_t>(V) + 1);
    const double oracle = ctc_oracle(lp, y);
    if (!feasible(y, T)) {
      CHECK(std::isinf(oracle));
      CHECK_THROWS_AS(ctc_loss_value(lp, y), InfeasibleError);
      continue;
    }
    CHECK(std::abs(ctc_loss_value(lp, y) - oracle) < 1e-8);
  }
}

TEST_CASE("ctc gradient matches finite differences") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor lp = random_log_post(rng, 6, 4);
    LabelSeq y = random_labels(rng, static_cast<std::size_t>(rng.uniform_int(1, 3)), 3);
    CHECK(cakt::testing::grad_error([&](Tape&, Var v) { return ctc_loss(v, y); }, lp) < 1e-5);
  }
  // through the log-softmax, as the model uses it
  Tensor logits = randn({7, 5}, 1.0, rng);
  CHECK(cakt::testing::grad_error(
            [](Tape&, Var v) { return ctc_loss(ops::log_softmax_rows(v), {2, 2, 4}); }, logits) <
        1e-5);
}

TEST_CASE("raising a correct-path symbol never increases single-path loss") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 5));
    LabelSeq y(n);
    for (std::size_t i = 0; i < n; ++i) {
      do {
        y[i] = static_cast<int>(rng.uniform_int(1, 4));
      } while (i > 0 && y[i] == y[i - 1]);
    }
    Tensor logits = randn({n, 5}, 1.0, rng);
    const double before = ctc_loss_value(ops::log_softmax_rows(logits), y);
    const auto t = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
    logits(t, static_cast<std::size_t>(y[t])) += rng.uniform() + 1e-3;
    const double after = ctc_loss_value(ops::log_softmax_rows(logits), y);
    CHECK(after <= before);
  }
}

TEST_CASE("infeasible utterance names its id") {
  Tensor lp = ops::log_softmax_rows(Tensor::matrix(2, 3));
  try {
    ctc_loss_value(lp, {1, 1}, "utt-7");
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find("utt-7") != std::string::npos);
  }
  CHECK(required_frames({1, 1}) == 3);
  CHECK(required_frames({1, 2}) == 2);
}

TEST_CASE("oracle guard") {
  Tensor lp = ops::log_softmax_rows(Tensor::matrix(12, 4));
  CHECK_THROWS_AS(ctc_oracle(lp, {1}), Error);
}

TEST_CASE("collapse rule") {
  CHECK(collapse({1, 1, 0, 1, 2, 2}) == LabelSeq{1, 1, 2});
  CHECK(collapse({0, 0, 0}).empty());
  CHECK(collapse({2, 0, 2}) == LabelSeq{2, 2});
}

TEST_CASE("collapse is idempotent on blank-free output") {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> path(static_cast<std::size_t>(rng.uniform_int(0, 12)));
    for (auto& p : path) p = static_cast<int>(rng.uniform_int(0, 3));
    auto once = collapse(path);
    // a collapsed sequence has no blanks; re-collapsing only merges repeats
    bool has_adjacent_repeat = false;
    for (std::size_t i = 1; i < once.size(); ++i) has_adjacent_repeat |= once[i] == once[i - 1];
    if (!has_adjacent_repeat) CHECK(collapse(once) == once);
    CHECK(collapse(collapse(once)) == collapse(once));
  }
}

TEST_CASE("greedy decoding") {
  auto one_hot = [](std::vector<int> ids, std::size_t classes) {
    Tensor t = Tensor::matrix(ids.size(), classes, -50.0);
    for (std::size_t i = 0; i < ids.size(); ++i) t(i, static_cast<std::size_t>(ids[i])) = 0.0;
    return t;
  };
  CHECK(greedy_decode(one_hot({1, 1, 0, 2}, 3)) == LabelSeq{1, 2});
  CHECK(greedy_decode(one_hot({0, 0, 0}, 3)).empty());
  const double h = std::log(0.5);
  CHECK(greedy_decode(Tensor::from_rows({{h, h}})).empty());
}
