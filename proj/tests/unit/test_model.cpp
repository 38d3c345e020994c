// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "cakt/ctc/ctc.hpp"
#include "cakt/error.hpp"
#include "cakt/model/encoder.hpp"
#include "cakt/model/teacher.hpp"
#include "cakt/numerics/gradcheck.hpp"
#include "cakt/numerics/ops.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cakt;
using namespace cakt::model;

namespace {

EncoderConfig small_encoder() {
  EncoderConfig c;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.ffn_dim = 12;
  c.feat_dim = 5;
  c.vocab_size = 4;
  return c;
}

double checksum(const ParameterList& params) {
  double s = 0.0;
  for (auto* p : params)
    for (double v : p->value().data()) s += v * 1.000001;
  return s;
}

}  // namespace

TEST_CASE("sinusoid position zero") {
  auto t = sinusoid_table(3, 6);
  for (std::size_t c = 0; c < 6; ++c) CHECK(t(0, c) == (c % 2 == 0 ? 0.0 : 1.0));
}

TEST_CASE("encoder output length and shape") {
  auto cfg = small_encoder();
  Encoder enc(cfg, 1);
  Rng rng(2);
  Tape t;
  CHECK(enc.encode(t, randn({3, 5}, 1.0, rng)).rows() == 1);
  for (std::size_t raw : {3u, 4u, 9u, 20u}) {
    Var hx = enc.encode(t, randn({raw, 5}, 1.0, rng));
    CHECK(hx.rows() == (raw - 3) / 2 + 1);
    CHECK(hx.cols() == 8);
  }
  CHECK_THROWS_AS(enc.encode(t, randn({2, 5}, 1.0, rng)), ShapeError);
  CHECK(cfg.output_frames(3) == 1);
}

TEST_CASE("encoder config validation") {
  auto cfg = small_encoder();
  cfg.n_heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("ctc head with zero projection is uniform") {
  auto cfg = small_encoder();
  Encoder enc(cfg, 1);
  for (auto* p : enc.head_parameters())
    if (p->name() == "encoder.head.weight") p->mutable_value().fill(0.0);
  Rng rng(3);
  Tape t;
  Var hx = enc.encode(t, randn({9, 5}, 1.0, rng));
  const Tensor before = hx.value();
  Var lp = enc.ctc_head(t, hx);
  for (double v : lp.value().data()) CHECK(v == doctest::Approx(-std::log(5.0)).epsilon(1e-14));
  CHECK(bit_equal(hx.value(), before));
}

TEST_CASE("ctc head rows are distributions") {
  Encoder enc(small_encoder(), 4);
  Rng rng(5);
  Tape t;
  Var lp = enc.ctc_head(t, enc.encode(t, randn({11, 5}, 1.0, rng)));
  for (std::size_t r = 0; r < lp.rows(); ++r) {
    double s = 0.0;
    for (double v : lp.value().row(r)) s += std::exp(v);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("position signal makes encoding order-sensitive") {
  Encoder enc(small_encoder(), 6);
  Rng rng(7);
  Tensor x = randn({9, 5}, 1.0, rng);
  Tensor shuffled = x;
  for (std::size_t c = 0; c < 5; ++c) std::swap(shuffled(0, c), shuffled(8, c));
  Tape t;
  CHECK_FALSE(bit_equal(enc.encode(t, x).value(), enc.encode(t, shuffled).value()));
}

TEST_CASE("encoder is deterministic") {
  Rng rng(8);
  Tensor x = randn({10, 5}, 1.0, rng);
  Encoder a(small_encoder(), 9), b(small_encoder(), 9);
  Tape t;
  CHECK(bit_equal(a.encode(t, x).value(), b.encode(t, x).value()));
}

TEST_CASE("full encoder pipeline gradient check") {
  Encoder enc(small_encoder(), 10);
  Rng rng(11);
  const ctc::LabelSeq y{1, 3};
  for (int attempt = 0; attempt < 20; ++attempt) {
    Tensor x = randn({9, 5}, 1.0, rng);
    auto report = finite_difference_check(enc.parameters(), [&](Tape& t) {
      return ctc::ctc_loss(enc.ctc_head(t, enc.encode(t, x)), y);
    });
    if (report.min_relu_gap < 1e-4) continue;  // too close to a ReLU kink
    INFO(report.to_string());
    CHECK(report.passed);
    CHECK(report.max_rel_err < 1e-4);
    return;
  }
  FAIL("no kink-free sample found");
}

TEST_CASE("frozen conv front-end gets zero gradient while transformer learns") {
  Encoder enc(small_encoder(), 12);
  enc.set_conv_frozen(true);
  Rng rng(13);
  Tape t;
  for (auto* p : enc.parameters()) p->zero_grad();
  t.backward(ctc::ctc_loss(enc.ctc_head(t, enc.encode(t, randn({9, 5}, 1.0, rng))), {2}));
  for (auto* p : enc.conv_parameters())
    for (double v : p->grad().data()) CHECK(v == 0.0);
  double norm = 0.0;
  for (auto* p : enc.transformer_parameters())
    for (double v : p->grad().data()) norm += v * v;
  CHECK(norm > 0.0);
}

TEST_CASE("output projection initialised from token table") {
  auto cfg = small_encoder();
  Encoder enc(cfg, 14);
  Rng rng(15);
  Tensor table = randn({cfg.vocab_size + 3, cfg.d_model}, 1.0, rng);
  CHECK(enc.init_output_from_embeddings(table));
  const Tensor& w = enc.head_parameters()[2]->value();
  for (std::size_t r = 0; r < cfg.d_model; ++r) {
    CHECK(w(r, 0) == 0.0);
    for (std::size_t v = 1; v <= cfg.vocab_size; ++v) CHECK(w(r, v) == table(v, r));
  }
  CHECK_FALSE(enc.init_output_from_embeddings(randn({7, 3}, 1.0, rng)));
}

TEST_CASE("teacher build determinism") {
  TeacherConfig cfg;
  cfg.d_teacher = 16;
  cfg.vocab_size = 5;
  auto a = build_teacher(cfg, 16);
  auto b = build_teacher(cfg, 16);
  CHECK(checksum(a->parameters()) == checksum(b->parameters()));
  cfg.seed = 8;
  auto c = build_teacher(cfg, 16);
  CHECK(checksum(a->parameters()) != checksum(c->parameters()));
  CHECK_THROWS_AS(build_teacher(cfg, 32), ConfigError);
  for (auto* p : a->parameters()) CHECK(p->frozen());
}

TEST_CASE("teacher states shape and contextuality") {
  TeacherConfig cfg;
  cfg.d_teacher = 16;
  cfg.vocab_size = 5;
  cfg.seed = 7;
  auto teacher = build_teacher(cfg, 16);
  auto s = teacher->encode({2});
  REQUIRE(s.layers.size() == cfg.n_layers + 1);
  for (const auto& l : s.layers) {
    CHECK(l.rows() == 3);
    CHECK(l.cols() == 16);
  }
  auto ab = teacher->encode({1, 2});
  auto ac = teacher->encode({1, 3});
  // layer 0 is context-free, deeper layers are not
  CHECK(std::equal(ab.layers[0].row(1).begin(), ab.layers[0].row(1).end(),
                   ac.layers[0].row(1).begin()));
  bool differs = false;
  for (std::size_t l = 1; l < ab.layers.size(); ++l)
    differs |= !std::equal(ab.layers[l].row(1).begin(), ab.layers[l].row(1).end(),
                           ac.layers[l].row(1).begin());
  CHECK(differs);
  CHECK_THROWS_AS(teacher->encode({6}), DataError);
  CHECK_THROWS_AS(teacher->encode({}), DataError);
}

TEST_CASE("layer average") {
  Rng rng(16);
  Tensor v = randn({3, 4}, 1.0, rng);
  CHECK(layer_average({v, v, v}) == v);
  Tensor m = randn({3, 4}, 1.0, rng);
  Tensor two_m = m;
  for (auto& x : two_m.data()) x *= 2;
  auto avg = layer_average({Tensor(Shape{3, 4}, 0.0), two_m});
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(avg[i] == doctest::Approx(m[i]).epsilon(1e-15));

  std::vector<Tensor> layers;
  for (int l = 0; l < 5; ++l) layers.push_back(randn({3, 4}, 1.0, rng));
  avg = layer_average(layers);
  for (std::size_t i = 0; i < avg.size(); ++i) {
    long double s = 0;
    for (const auto& l : layers) s += l[i];
    CHECK(std::abs(static_cast<double>(s / 5) - avg[i]) < 1e-12);
  }
}

TEST_CASE("teacher with identity layers averages to its input") {
  Rng rng(17);
  Tensor h0 = randn({4, 6}, 1.0, rng);
  TeacherStates s;
  s.layers = {h0, h0, h0, h0, h0};
  CHECK(layer_average(s.layers) == h0);
}

TEST_CASE("oracle teacher smooths one-hot rows with neighbours") {
  TeacherConfig cfg;
  cfg.d_teacher = 16;
  cfg.vocab_size = 5;
  cfg.mode = TeacherMode::Oracle;
  auto teacher = build_teacher(cfg, 16);
  auto s = teacher->encode({1, 2});
  // rows: BOS(6), 1, 2, EOS(7)
  CHECK(s.average(1, 1) == doctest::Approx(0.7));
  CHECK(s.average(1, 6) == doctest::Approx(0.15));
  CHECK(s.average(1, 2) == doctest::Approx(0.15));
  CHECK(s.average(2, 2) == doctest::Approx(0.7));
  CHECK(s.average(2, 7) == doctest::Approx(0.15));
  cfg.d_teacher = 4;
  cfg.n_heads = 2;
  CHECK_THROWS_AS(build_teacher(cfg, 4), ConfigError);
}
