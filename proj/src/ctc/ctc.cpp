// SPDX-License-Identifier: Apache-2.0
#include "cakt/ctc/ctc.hpp"

#include <cmath>
#include <limits>

#include "cakt/error.hpp"
#include "cakt/numerics/ops.hpp"

namespace cakt::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Blank-augmented label sequence: ∅ y1 ∅ y2 ... ∅ yN ∅
std::vector<int> augment(const LabelSeq& labels) {
  std::vector<int> ext(2 * labels.size() + 1, kBlank);
  for (std::size_t n = 0; n < labels.size(); ++n) ext[2 * n + 1] = labels[n];
  return ext;
}

void validate(const Tensor& log_post, const LabelSeq& labels, const std::string& id) {
  const std::size_t classes = log_post.cols();
  if (labels.empty()) throw DataError("ctc: empty label sequence" + (id.empty() ? "" : " for " + id));
  for (int y : labels) {
    if (y <= kBlank || static_cast<std::size_t>(y) >= classes) {
      throw DataError("ctc: label id " + std::to_string(y) + " outside 1.." +
                      std::to_string(classes - 1) + (id.empty() ? "" : " in utterance " + id));
    }
  }
  const std::size_t t = log_post.rows();
  if (!feasible(labels, t)) {
    throw InfeasibleError("ctc: utterance " + (id.empty() ? std::string("<unnamed>") : id) +
                          " infeasible: " + std::to_string(labels.size()) + " labels need " +
                          std::to_string(required_frames(labels)) + " frames, have " +
                          std::to_string(t));
  }
}

struct Lattice {
  std::vector<int> ext;
  Tensor alpha;  // [T, S], emission at t included
  double log_prob = kNegInf;
};

bool can_skip(const std::vector<int>& ext, std::size_t s) {
  return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
}

Lattice forward(const Tensor& lp, const LabelSeq& labels) {
  Lattice lat;
  lat.ext = augment(labels);
  const std::size_t T = lp.rows(), S = lat.ext.size();
  lat.alpha = Tensor(Shape{T, S}, kNegInf);
  auto& a = lat.alpha;
  a(0, 0) = lp(0, lat.ext[0]);
  if (S > 1) a(0, 1) = lp(0, lat.ext[1]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = a(t - 1, s);
      if (s >= 1) acc = log_add(acc, a(t - 1, s - 1));
      if (can_skip(lat.ext, s)) acc = log_add(acc, a(t - 1, s - 2));
      a(t, s) = acc == kNegInf ? kNegInf : acc + lp(t, lat.ext[s]);
    }
  }
  lat.log_prob = S > 1 ? log_add(a(T - 1, S - 1), a(T - 1, S - 2)) : a(T - 1, S - 1);
  return lat;
}

// beta(t, s): log-probability of emitting the remainder after frame t given
// the path sits at augmented position s at t (emission at t excluded).
Tensor backward_lattice(const Tensor& lp, const std::vector<int>& ext) {
  const std::size_t T = lp.rows(), S = ext.size();
  Tensor b(Shape{T, S}, kNegInf);
  b(T - 1, S - 1) = 0.0;
  if (S > 1) b(T - 1, S - 2) = 0.0;
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = b(t + 1, s) + lp(t + 1, ext[s]);
      if (s + 1 < S) acc = log_add(acc, b(t + 1, s + 1) + lp(t + 1, ext[s + 1]));
      if (s + 2 < S && can_skip(ext, s + 2)) {
        acc = log_add(acc, b(t + 1, s + 2) + lp(t + 1, ext[s + 2]));
      }
      b(t, s) = acc;
    }
  }
  return b;
}

}  // namespace

std::size_t required_frames(const LabelSeq& labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++n;
  return n;
}

bool feasible(const LabelSeq& labels, std::size_t frames) {
  return frames >= required_frames(labels);
}

double ctc_loss_value(const Tensor& log_post, const LabelSeq& labels, const std::string& id) {
  validate(log_post, labels, id);
  return -forward(log_post, labels).log_prob;
}

Var ctc_loss(Var log_post, const LabelSeq& labels, const std::string& id) {
  const Tensor& lp = log_post.value();
  validate(lp, labels, id);
  Lattice lat = forward(lp, labels);
  if (!std::isfinite(lat.log_prob)) {
    throw NumericError("ctc: zero-probability target for utterance " + id);
  }
  const double log_prob = lat.log_prob;
  const auto in = log_post.id();
  return log_post.tape().record(
      Tensor::scalar(-log_prob), {log_post},
      [in, lat = std::move(lat)](Tape& t, const Tensor& g) {
        const Tensor& lp = t.value(in);
        const Tensor beta = backward_lattice(lp, lat.ext);
        const std::size_t T = lp.rows(), S = lat.ext.size();
        Tensor grad(lp.shape());
        const double scale = g.item();
        for (std::size_t tt = 0; tt < T; ++tt) {
          for (std::size_t s = 0; s < S; ++s) {
            const double occ = lat.alpha(tt, s) + beta(tt, s);
            if (occ == kNegInf) continue;
            grad(tt, lat.ext[s]) -= scale * std::exp(occ - lat.log_prob);
          }
        }
        t.accumulate(in, grad);
      });
}

double ctc_oracle(const Tensor& log_post, const LabelSeq& labels) {
  const std::size_t T = log_post.rows(), C = log_post.cols();
  double paths = 1.0;
  for (std::size_t t = 0; t < T; ++t) paths *= static_cast<double>(C);
  if (paths > 1e7) {
    throw Error("ctc_oracle: " + std::to_string(C) + "^" + std::to_string(T) +
                " paths exceeds the 1e7 enumeration guard");
  }
  std::vector<int> path(T, 0);
  double total = kNegInf;
  while (true) {
    if (collapse(path) == labels) {
      double lp = 0.0;
      for (std::size_t t = 0; t < T; ++t) lp += log_post(t, static_cast<std::size_t>(path[t]));
      total = log_add(total, lp);
    }
    std::size_t pos = 0;
    while (pos < T && ++path[pos] == static_cast<int>(C)) path[pos++] = 0;
    if (pos == T) break;
  }
  return total == kNegInf ? std::numeric_limits<double>::infinity() : -total;
}

LabelSeq collapse(const std::vector<int>& path) {
  LabelSeq out;
  int prev = -1;
  for (int id : path) {
    if (id != prev && id != kBlank) out.push_back(id);
    prev = id;
  }
  return out;
}

LabelSeq greedy_decode(const Tensor& log_post) {
  std::vector<int> path(log_post.rows());
  for (std::size_t t = 0; t < log_post.rows(); ++t) {
    auto row = log_post.row(t);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    path[t] = static_cast<int>(best);
  }
  return collapse(path);
}

}  // namespace cakt::ctc
