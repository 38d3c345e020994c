// SPDX-License-Identifier: Apache-2.0
#include "cakt/cli/verify.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "cakt/ctc/ctc.hpp"
#include "cakt/data/corpus.hpp"
#include "cakt/error.hpp"
#include "cakt/kt/kt.hpp"
#include "cakt/numerics/gradcheck.hpp"
#include "cakt/numerics/ops.hpp"
#include "cakt/numerics/random.hpp"
#include "cakt/training/trainer.hpp"

namespace cakt::cli {

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

CheckResult verify_ctc_oracle(std::size_t instances, std::uint64_t seed) {
  Stopwatch clock;
  CheckResult r{"ctc-oracle", true, "", 0.0};
  double worst = 0.0;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng(derive_seed(seed, "ctc-oracle:" + std::to_string(i)));
    const auto T = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto V = static_cast<std::size_t>(rng.uniform_int(1, 3));
    ctc::LabelSeq labels;
    do {
      labels.assign(static_cast<std::size_t>(rng.uniform_int(1, 3)), 0);
      for (auto& y : labels) y = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(V)));
    } while (!ctc::feasible(labels, T));
    const Tensor lp = ops::log_softmax_rows(randn(Shape{T, V + 1}, 2.0, rng));
    const double fast = ctc::ctc_loss_value(lp, labels);
    const double slow = ctc::ctc_oracle(lp, labels);
    const double diff = std::abs(fast - slow);
    worst = std::max(worst, diff);
    if (!(diff <= 1e-8)) ++failures;
  }
  r.passed = failures == 0;
  r.seconds = clock.seconds();
  r.detail = std::to_string(instances) + " instances, " + std::to_string(failures) +
             " outside 1e-8, max |diff| " + sci(worst);
  return r;
}

CheckResult verify_ctc_hand_case() {
  Stopwatch clock;
  const double h = std::log(0.5);
  const Tensor lp = Tensor::from_rows({{h, h}, {h, h}});
  const double loss = ctc::ctc_loss_value(lp, {1});
  const double expected = -std::log(0.75);
  CheckResult r{"ctc-hand-case", std::abs(loss - expected) <= 1e-10, "", 0.0};
  std::ostringstream os;
  os << std::setprecision(17) << "loss " << loss << ", -ln 0.75 = " << expected;
  r.detail = os.str();
  r.seconds = clock.seconds();
  return r;
}

CheckResult verify_gradcheck(std::uint64_t seed) {
  Stopwatch clock;
  training::ModelConfig mc;
  mc.encoder.d_model = 16;
  mc.encoder.n_layers = 2;
  mc.encoder.n_heads = 2;
  mc.encoder.ffn_dim = 16;
  mc.encoder.vocab_size = 4;
  mc.encoder.feat_dim = 6;
  mc.teacher.d_teacher = 16;
  mc.teacher.n_layers = 2;
  mc.teacher.n_heads = 2;
  mc.teacher.vocab_size = 4;
  mc.kt.n_heads = 2;
  mc.kt.query_mode = kt::QueryMode::TokenPlusPositional;
  mc.kt.shift_mode = kt::ShiftMode::Right;

  training::TrainConfig tc;
  tc.lambda = 0.3;

  data::SynthConfig sc;
  sc.vocab_size = 4;
  sc.f_in = 6;
  sc.seq_len_min = 2;
  sc.seq_len_max = 4;
  sc.n_train = 2;
  sc.n_dev = 1;
  sc.n_test = 1;

  CheckResult r{"gradcheck", false, "", 0.0};
  // redraw until no ReLU pre-activation sits within 1e-4 of its kink
  for (std::uint64_t attempt = 0; attempt < 20; ++attempt) {
    sc.seed = derive_seed(seed, "gradcheck-data:" + std::to_string(attempt));
    const auto corpus = data::generate_corpus(sc);
    training::CaktModel model(mc, true, derive_seed(seed, "gradcheck-model:" + std::to_string(attempt)));
    training::unfreeze_schedule(tc.freeze_encoder_until + 1, tc, model.encoder());

    ParameterList params = model.trainable_parameters();
    for (auto* p : model.teacher().parameters()) params.push_back(p);

    const auto& utts = corpus.train;
    auto loss = [&](Tape& tape) {
      std::vector<Var> terms;
      for (const auto& u : utts) {
        auto l = training::utterance_objective(tape, model, tc, u.feature_tensor(), u.tokens, u.id);
        terms.push_back(ops::scale(l.objective, 1.0 / static_cast<double>(utts.size())));
      }
      return ops::add_n(terms);
    };
    const auto report = finite_difference_check(params, loss);
    if (report.min_relu_gap < 1e-4) continue;
    std::size_t pairs = 0;
    for (const auto& u : utts) pairs += kt::align_pairs(u.tokens.size(), mc.kt.shift_mode).size();
    r.passed = report.passed && pairs > 0;
    r.detail = "batch of " + std::to_string(utts.size()) + " utterances, " + std::to_string(pairs) +
               " aligned pairs, max rel err " + sci(report.max_rel_err) + " (tol 1e-4)\n" +
               report.to_string();
    r.seconds = clock.seconds();
    return r;
  }
  r.detail = "could not draw an instance away from ReLU kinks";
  r.seconds = clock.seconds();
  return r;
}

CheckResult verify_kt_properties(std::size_t draws, std::uint64_t seed) {
  Stopwatch clock;
  CheckResult r{"kt-props", true, "", 0.0};
  Rng rng(seed);
  std::size_t bound_fail = 0, ident_fail = 0, orth_fail = 0, scale_fail = 0;
  double worst_scale = 0.0, worst_ident = 0.0, worst_orth = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto d = static_cast<std::size_t>(rng.uniform_int(2, 8));
    const double k = 0.5 + 29.5 * rng.uniform();
    const auto shift = static_cast<kt::ShiftMode>(rng.uniform_int(-1, 1));
    const auto pairs = kt::align_pairs(n, shift);
    const double cap = 2.0 * k * static_cast<double>(pairs.size());

    Tensor h = randn(Shape{n + 2, d}, 1.0, rng);
    Tensor o = randn(Shape{n + 2, d}, 1.0, rng);
    auto loss = [&](const Tensor& teacher, const Tensor& out) {
      Tape t(false);
      return kt::kt_loss(t, teacher, t.constant(out), pairs, k).value().item();
    };

    const double l = loss(h, o);
    if (!(l >= 0.0 && l <= cap)) ++bound_fail;

    Tensor scaled = h;
    for (std::size_t row = 0; row < scaled.rows(); ++row) {
      const double c = std::exp(-3.0 + 6.0 * rng.uniform());
      for (std::size_t col = 0; col < d; ++col) scaled(row, col) *= c;
    }
    const double ds = std::abs(loss(scaled, o) - l);
    worst_scale = std::max(worst_scale, ds);
    if (!(ds <= 1e-12)) ++scale_fail;

    // student rows equal to teacher rows at the paired positions
    Tensor same = o;
    for (const auto& p : pairs)
      for (std::size_t col = 0; col < d; ++col) same(p.student, col) = h(p.teacher, col);
    const double li = loss(h, same);
    worst_ident = std::max(worst_ident, std::abs(li));
    if (!(std::abs(li) <= 1e-12)) ++ident_fail;

    // student rows made orthogonal to their teacher rows
    Tensor orth = o;
    for (const auto& p : pairs) {
      double dot = 0.0, hh = 0.0;
      for (std::size_t col = 0; col < d; ++col) {
        dot += h(p.teacher, col) * o(p.student, col);
        hh += h(p.teacher, col) * h(p.teacher, col);
      }
      for (std::size_t col = 0; col < d; ++col)
        orth(p.student, col) = o(p.student, col) - dot / hh * h(p.teacher, col);
    }
    const double lo = loss(h, orth);
    const double expect = k * static_cast<double>(pairs.size());
    worst_orth = std::max(worst_orth, std::abs(lo - expect));
    if (!(std::abs(lo - expect) <= 1e-12 * std::max(1.0, expect))) ++orth_fail;
  }
  r.passed = bound_fail + ident_fail + orth_fail + scale_fail == 0;
  r.detail = std::to_string(draws) + " draws; bound violations " + std::to_string(bound_fail) +
             ", identical " + std::to_string(ident_fail) + " (max " + sci(worst_ident) +
             "), orthogonal " + std::to_string(orth_fail) + " (max " + sci(worst_orth) +
             "), scale invariance " + std::to_string(scale_fail) + " (max " + sci(worst_scale) + ")";
  r.seconds = clock.seconds();
  return r;
}

CheckResult verify_shift_semantics() {
  Stopwatch clock;
  CheckResult r{"shift-semantics", true, "", 0.0};
  std::ostringstream os;
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int i = -1; i <= 1; ++i) {
      // lattice: teacher t pairs with student s iff s - t == i, both inside 1..N
      std::vector<kt::AlignedPair> lattice;
      for (std::size_t t = 1; t <= n; ++t)
        for (std::size_t s = 1; s <= n; ++s)
          if (static_cast<long>(s) - static_cast<long>(t) == i) lattice.push_back({t, s});
      const std::size_t expected_count = i == 0 ? n : n - 1;
      const auto got = kt::align_pairs(n, static_cast<kt::ShiftMode>(i));
      if (got != lattice || got.size() != expected_count) {
        r.passed = false;
        os << "N=" << n << " i=" << i << " mismatch; ";
      }
    }
  }
  r.detail = r.passed ? "N=1..6, i in {-1,0,1}: pair counts N, N-1, N-1" : os.str();
  r.seconds = clock.seconds();
  return r;
}

std::vector<CheckResult> run_verify_suite(const std::string& suite) {
  if (suite == "ctc-oracle") return {verify_ctc_oracle(), verify_ctc_hand_case()};
  if (suite == "gradcheck") return {verify_gradcheck()};
  if (suite == "kt-props") return {verify_kt_properties(), verify_shift_semantics()};
  if (suite == "all") {
    return {verify_ctc_oracle(), verify_ctc_hand_case(), verify_gradcheck(),
            verify_kt_properties(), verify_shift_semantics()};
  }
  throw ConfigError("unknown verify suite '" + suite + "' (expected ctc-oracle|gradcheck|kt-props|all)");
}

}  // namespace cakt::cli
