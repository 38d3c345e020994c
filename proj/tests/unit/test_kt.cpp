// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <set>

#include "cakt/error.hpp"
#include "cakt/kt/kt.hpp"
#include "cakt/model/encoder.hpp"
#include "cakt/model/teacher.hpp"
#include "cakt/numerics/gradcheck.hpp"
#include "cakt/numerics/ops.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cakt;
using namespace cakt::kt;

namespace {

// Per-pair scalar re-computation, independent of the taped path.
double naive_kt(const Tensor& h, const Tensor& o, const std::vector<AlignedPair>& pairs, double k) {
  double total = 0.0;
  for (const auto& p : pairs) {
    double dot = 0, hh = 0, oo = 0;
    for (std::size_t c = 0; c < h.cols(); ++c) {
      dot += h(p.teacher, c) * o(p.student, c);
      hh += h(p.teacher, c) * h(p.teacher, c);
      oo += o(p.student, c) * o(p.student, c);
    }
    total += 1.0 - dot / std::max(std::sqrt(hh) * std::sqrt(oo), 1e-12);
  }
  return k * total;
}

double loss_of(const Tensor& h, const Tensor& o, const std::vector<AlignedPair>& pairs, double k) {
  Tape t;
  return kt_loss(t, h, t.constant(o), pairs, k).value().item();
}

}  // namespace

TEST_CASE("align pairs") {
  CHECK(align_pairs(4, ShiftMode::Right) ==
        std::vector<AlignedPair>{{1, 2}, {2, 3}, {3, 4}});
  CHECK(align_pairs(4, ShiftMode::None) ==
        std::vector<AlignedPair>{{1, 1}, {2, 2}, {3, 3}, {4, 4}});
  CHECK(align_pairs(4, ShiftMode::Left) ==
        std::vector<AlignedPair>{{2, 1}, {3, 2}, {4, 3}});
  CHECK(align_pairs(1, ShiftMode::Left).empty());
  CHECK(align_pairs(1, ShiftMode::Right).empty());
}

TEST_CASE("left shift mirrors right shift") {
  for (std::size_t n = 1; n <= 8; ++n) {
    std::set<std::pair<std::size_t, std::size_t>> left, swapped_right;
    for (auto p : align_pairs(n, ShiftMode::Left)) left.insert({p.teacher, p.student});
    for (auto p : align_pairs(n, ShiftMode::Right)) swapped_right.insert({p.student, p.teacher});
    CHECK(left == swapped_right);
  }
}

TEST_CASE("query construction") {
  Tape t;
  Rng rng(1);
  const std::size_t V = 4, d = 6;
  Var table = t.constant(randn({V + 3, d}, 1.0, rng));
  auto e = build_queries(t, {1, 2}, table, QueryMode::PositionalOnly, V);
  REQUIRE(e.rows() == 4);
  for (std::size_t c = 0; c < d; ++c) CHECK(e.value()(0, c) == (c % 2 ? 1.0 : 0.0));
  CHECK(e.value() == build_queries(t, {3, 4}, table, QueryMode::PositionalOnly, V).value());

  auto a = build_queries(t, {1, 2}, table, QueryMode::TokenPlusPositional, V);
  auto b = build_queries(t, {1, 3}, table, QueryMode::TokenPlusPositional, V);
  CHECK_FALSE(a.value() == b.value());
  CHECK(a.value()(0, 0) == table.value()(V + 1, 0));
  CHECK_THROWS_AS(build_queries(t, {5}, table, QueryMode::TokenPlusPositional, V), DataError);
}

TEST_CASE("cross attention over a single frame ignores the query") {
  Rng rng(2);
  model::MultiHeadAttention attn("x", 8, 4, rng);
  Tape t;
  Var q = t.constant(randn({5, 8}, 1.0, rng));
  Var kv = t.constant(randn({1, 8}, 1.0, rng));
  auto o = attn.forward(t, q, kv).value();
  for (std::size_t r = 1; r < 5; ++r)
    for (std::size_t c = 0; c < 8; ++c) CHECK(o(r, c) == doctest::Approx(o(0, c)).epsilon(1e-14));
}

TEST_CASE("cross attention weights are distributions") {
  Rng rng(3);
  model::MultiHeadAttention attn("x", 8, 4, rng);
  Tape t;
  std::vector<Tensor> w;
  attn.forward(t, t.constant(randn({5, 8}, 1.0, rng)), t.constant(randn({7, 8}, 1.0, rng)), &w);
  REQUIRE(w.size() == 4);
  for (const auto& head : w) {
    CHECK(head.rows() == 5);
    CHECK(head.cols() == 7);
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0;
      for (double v : head.row(r)) s += v;
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  CHECK_THROWS_AS(attn.forward(t, t.constant(randn({2, 6}, 1.0, rng)), t.constant(randn({2, 8}, 1.0, rng))),
                  ShapeError);
}

TEST_CASE("kt loss analytic cases") {
  Rng rng(4);
  Tensor h = randn({4, 6}, 1.0, rng);
  auto pairs = align_pairs(2, ShiftMode::None);
  CHECK(std::abs(loss_of(h, h, pairs, 20.0)) < 1e-12);

  Tensor a = Tensor::matrix(4, 2), b = Tensor::matrix(4, 2);
  for (std::size_t r = 0; r < 4; ++r) {
    a(r, 0) = 1.0;
    b(r, 1) = 2.0;
  }
  CHECK(loss_of(a, b, pairs, 20.0) == doctest::Approx(40.0).epsilon(1e-14));
  Tape t;
  CHECK(kt_loss(t, a, t.constant(b), {}, 20.0).value().item() == 0.0);
}

TEST_CASE("kt loss matches per-pair recomputation, bounds and scale invariance") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 7));
    const auto shift = static_cast<ShiftMode>(rng.uniform_int(-1, 1));
    Tensor h = randn({n + 2, 5}, 1.0, rng);
    Tensor o = randn({n + 2, 5}, 1.0, rng);
    auto pairs = align_pairs(n, shift);
    const double k = 20.0;
    const double l = loss_of(h, o, pairs, k);
    CHECK(std::abs(l - naive_kt(h, o, pairs, k)) < 1e-12);
    CHECK(l >= 0.0);
    CHECK(l <= 2 * k * static_cast<double>(pairs.size()));
    if (!pairs.empty()) {
      Tensor hs = h;
      const auto row = pairs[0].teacher;
      for (std::size_t c = 0; c < 5; ++c) hs(row, c) *= 3.7;
      CHECK(std::abs(loss_of(hs, o, pairs, k) - l) < 1e-12);
    }
  }
}

TEST_CASE("zero-norm pair is guarded") {
  Tensor h = Tensor::matrix(3, 4);
  Rng rng(6);
  Tensor o = randn({3, 4}, 1.0, rng);
  CHECK(loss_of(h, o, align_pairs(1, ShiftMode::None), 20.0) == doctest::Approx(20.0));
}

TEST_CASE("kt module gradient check and gradient routing") {
  model::EncoderConfig ec;
  ec.d_model = 8;
  ec.n_heads = 2;
  ec.ffn_dim = 12;
  ec.feat_dim = 4;
  ec.vocab_size = 4;
  model::Encoder enc(ec, 1);
  enc.set_conv_frozen(true);
  model::TeacherConfig tc;
  tc.d_teacher = 8;
  tc.n_heads = 2;
  tc.vocab_size = 4;
  tc.n_layers = 2;
  auto teacher = model::build_teacher(tc, 8);
  KtConfig kc;
  kc.n_heads = 2;
  kc.shift_mode = ShiftMode::Right;
  KtModule module(4, 8, kc, teacher->token_embeddings(), 3);

  const ctc::LabelSeq y{1, 4, 2};
  const auto states = teacher->encode(y);
  Rng rng(7);
  ParameterList all = module.parameters();
  for (auto* p : enc.parameters()) all.push_back(p);
  for (int attempt = 0; attempt < 20; ++attempt) {
    Tensor x = randn({11, 4}, 1.0, rng);
    auto report = finite_difference_check(all, [&](Tape& t) {
      return module.forward(t, y, enc.encode(t, x), states.average).loss;
    });
    if (report.min_relu_gap < 1e-4) continue;
    INFO(report.to_string());
    CHECK(report.passed);
    break;
  }
  // gradients reach the query table, attention and encoder, never the teacher
  auto nonzero = [](Parameter* p) {
    for (double v : p->grad().data())
      if (v != 0.0) return true;
    return false;
  };
  CHECK(nonzero(module.parameters()[0]));
  CHECK(nonzero(module.parameters()[1]));
  CHECK(nonzero(enc.transformer_parameters()[2]));
  for (auto* p : teacher->parameters()) CHECK_FALSE(nonzero(p));
}

TEST_CASE("baseline configuration uses identity alignment") {
  KtConfig kc;
  CHECK(kc.query_mode == QueryMode::TokenPlusPositional);
  CHECK(kc.shift_mode == ShiftMode::None);
  CHECK(kc.k == 20.0);
  for (std::size_t n = 1; n <= 6; ++n)
    for (auto p : align_pairs(n, kc.shift_mode)) CHECK(p.teacher == p.student);
}

TEST_CASE("mode parsing") {
  CHECK(parse_shift_mode("right") == ShiftMode::Right);
  CHECK(parse_shift_mode("-1") == ShiftMode::Left);
  CHECK(parse_query_mode("pos") == QueryMode::PositionalOnly);
  CHECK_THROWS_AS(parse_query_mode("bogus"), ConfigError);
  CHECK_THROWS_AS(KtConfig{.k = 0.0}.validate(), ConfigError);
}
