// SPDX-License-Identifier: Apache-2.0
#include "cakt/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cakt/error.hpp"

namespace cakt::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

Shape matrix_shape(std::size_t r, std::size_t c) { return Shape{r, c}; }

// out[i, j] += sum_p a[i, p] * b[j, p]
void matmul_nt_into(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a.data().data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* br = b.data().data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      out(i, j) += acc;
    }
  }
}

// out[p, j] += sum_i a[i, p] * b[i, j]
void matmul_tn_into(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a.data().data() + i * k;
    const double* br = b.data().data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      double* orow = out.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * br[j];
    }
  }
}

}  // namespace

double logsumexp(std::span<const double> x) {
  if (x.empty()) throw Error("logsumexp of empty input");
  if (x.size() == 1) return x[0];
  const double m = *std::max_element(x.begin(), x.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

Tensor softmax_rows(const Tensor& x) {
  Tensor y(matrix_shape(x.rows(), x.cols()));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - m);
      s += out[c];
    }
    for (auto& v : out) v /= s;
  }
  return y;
}

Tensor log_softmax_rows(const Tensor& x) {
  Tensor y(matrix_shape(x.rows(), x.cols()));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    const double lse = logsumexp(in);
    auto out = y.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) out[c] = in[c] - lse;
  }
  return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dims differ " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(matrix_shape(m, n));
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data().data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      const double* brow = b.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(matrix_shape(a.cols(), a.rows()));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Var matmul(Var a, Var b) {
  auto out = matmul(a.value(), b.value());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor ga(matrix_shape(av.rows(), av.cols()));
      matmul_nt_into(g, bv, ga);
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ib)) {
      Tensor gb(matrix_shape(bv.rows(), bv.cols()));
      matmul_tn_into(av, g, gb);
      t.accumulate(ib, gb);
    }
  });
}

Var transpose(Var a) {
  const auto ia = a.id();
  return a.tape().record(transpose(a.value()), {a}, [ia](Tape& t, const Tensor& g) {
    t.accumulate(ia, transpose(g));
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) {
      Tensor ng = g;
      for (auto& v : ng.data()) v = -v;
      t.accumulate(ib, ng);
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      Tensor ga = g;
      const auto& bv = t.value(ib);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= bv[i];
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ib)) {
      Tensor gb = g;
      const auto& av = t.value(ia);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= av[i];
      t.accumulate(ib, gb);
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= c;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, c](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (auto& v : ga.data()) v *= c;
    t.accumulate(ia, ga);
  });
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += c;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a},
                         [ia](Tape& t, const Tensor& g) { t.accumulate(ia, g); });
}

Var add_row(Var x, Var bias) {
  const auto& xv = x.value();
  const auto& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw ShapeError("add_row: bias of " + std::to_string(bv.size()) + " for " +
                     std::to_string(xv.cols()) + " columns");
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  const auto ix = x.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, bias}, [ix, ib](Tape& t, const Tensor& g) {
    t.accumulate(ix, g);
    if (t.requires_grad(ib)) {
      Tensor gb(t.value(ib).shape());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
      }
      t.accumulate(ib, gb);
    }
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  double gap = std::numeric_limits<double>::infinity();
  for (auto& v : out.data()) {
    gap = std::min(gap, std::abs(v));
    if (v < 0.0) v = 0.0;
  }
  x.tape().note_relu_gap(gap);
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, const Tensor& g) {
    Tensor gx = g;
    const auto& xv = t.value(ix);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!(xv[i] > 0.0)) gx[i] = 0.0;
    t.accumulate(ix, gx);
  });
}

Var softmax_rows(Var x) {
  auto out = softmax_rows(x.value());
  const auto ix = x.id();
  auto& tape = x.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {x}, [ix, self](Tape& t, const Tensor& g) {
    const auto& y = t.value(self);
    Tensor gx(y.shape());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += gr[c] * yr[c];
      auto out = gx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) out[c] = yr[c] * (gr[c] - dot);
    }
    t.accumulate(ix, gx);
  });
}

Var log_softmax_rows(Var x) {
  auto out = log_softmax_rows(x.value());
  const auto ix = x.id();
  auto& tape = x.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {x}, [ix, self](Tape& t, const Tensor& g) {
    const auto& y = t.value(self);
    Tensor gx(y.shape());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double gsum = 0.0;
      for (double v : gr) gsum += v;
      auto out = gx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) out[c] = gr[c] - std::exp(yr[c]) * gsum;
    }
    t.accumulate(ix, gx);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const auto& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (gain.value().size() != d || bias.value().size() != d) {
    throw ShapeError("layer_norm: gain/bias size does not match feature dim " + std::to_string(d));
  }
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  Tensor out(matrix_shape(n, d));
  for (std::size_t r = 0; r < n; ++r) {
    auto in = xv.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    auto o = out.row(r);
    for (std::size_t c = 0; c < d; ++c) o[c] = (in[c] - mean) * inv * gv[c] + bv[c];
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(
      std::move(out), {x, gain, bias}, [ix, ig, ib, eps](Tape& t, const Tensor& g) {
        const auto& xv = t.value(ix);
        const auto& gv = t.value(ig);
        const std::size_t n = xv.rows(), d = xv.cols();
        Tensor gx(xv.shape());
        Tensor gg(gv.shape());
        Tensor gb(t.value(ib).shape());
        std::vector<double> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < n; ++r) {
          auto in = xv.row(r);
          auto gr = g.row(r);
          double mean = 0.0;
          for (double v : in) mean += v;
          mean /= static_cast<double>(d);
          double var = 0.0;
          for (double v : in) var += (v - mean) * (v - mean);
          var /= static_cast<double>(d);
          const double inv = 1.0 / std::sqrt(var + eps);
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            xhat[c] = (in[c] - mean) * inv;
            dxhat[c] = gr[c] * gv[c];
            gg[c] += gr[c] * xhat[c];
            gb[c] += gr[c];
            m1 += dxhat[c];
            m2 += dxhat[c] * xhat[c];
          }
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          auto o = gx.row(r);
          for (std::size_t c = 0; c < d; ++c) o[c] = inv * (dxhat[c] - m1 - xhat[c] * m2);
        }
        t.accumulate(ix, gx);
        t.accumulate(ig, gg);
        t.accumulate(ib, gb);
      });
}

std::size_t conv_output_length(std::size_t t_in, std::size_t width, std::size_t stride) {
  if (width == 0 || stride == 0) throw ShapeError("conv width and stride must be positive");
  if (t_in < width) return 0;
  return (t_in - width) / stride + 1;
}

Var conv1d_strided(Var x, Var kernel, std::size_t stride) {
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  if (kv.rank() != 3) throw ShapeError("conv1d kernel must be [width, in, out]");
  const std::size_t w = kv.shape()[0], f_in = kv.shape()[1], f_out = kv.shape()[2];
  if (xv.cols() != f_in) {
    throw ShapeError("conv1d: input has " + std::to_string(xv.cols()) + " features, kernel expects " +
                     std::to_string(f_in));
  }
  if (stride == 0) throw ShapeError("conv1d: stride must be >= 1");
  if (xv.rows() < w) {
    throw ShapeError("conv1d: input length " + std::to_string(xv.rows()) +
                     " shorter than kernel width " + std::to_string(w));
  }
  const std::size_t t_out = conv_output_length(xv.rows(), w, stride);
  Tensor out(matrix_shape(t_out, f_out));
  for (std::size_t t = 0; t < t_out; ++t) {
    double* o = out.data().data() + t * f_out;
    for (std::size_t k = 0; k < w; ++k) {
      const double* xr = xv.data().data() + (t * stride + k) * f_in;
      for (std::size_t i = 0; i < f_in; ++i) {
        const double xval = xr[i];
        const double* kr = kv.data().data() + (k * f_in + i) * f_out;
        for (std::size_t c = 0; c < f_out; ++c) o[c] += xval * kr[c];
      }
    }
  }
  const auto ix = x.id(), ik = kernel.id();
  return x.tape().record(std::move(out), {x, kernel}, [ix, ik, stride](Tape& t, const Tensor& g) {
    const auto& xv = t.value(ix);
    const auto& kv = t.value(ik);
    const std::size_t w = kv.shape()[0], f_in = kv.shape()[1], f_out = kv.shape()[2];
    const std::size_t t_out = g.rows();
    const bool need_x = t.requires_grad(ix), need_k = t.requires_grad(ik);
    Tensor gx = need_x ? Tensor(xv.shape()) : Tensor();
    Tensor gk = need_k ? Tensor(kv.shape()) : Tensor();
    for (std::size_t tt = 0; tt < t_out; ++tt) {
      const double* gr = g.data().data() + tt * f_out;
      for (std::size_t k = 0; k < w; ++k) {
        const std::size_t src = tt * stride + k;
        for (std::size_t i = 0; i < f_in; ++i) {
          const double* kr = kv.data().data() + (k * f_in + i) * f_out;
          if (need_x) {
            double acc = 0.0;
            for (std::size_t c = 0; c < f_out; ++c) acc += gr[c] * kr[c];
            gx(src, i) += acc;
          }
          if (need_k) {
            const double xval = xv(src, i);
            double* gkr = gk.data().data() + (k * f_in + i) * f_out;
            for (std::size_t c = 0; c < f_out; ++c) gkr[c] += xval * gr[c];
          }
        }
      }
    }
    if (need_x) t.accumulate(ix, gx);
    if (need_k) t.accumulate(ik, gk);
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const auto ix = x.id();
  return x.tape().record(Tensor::scalar(s), {x}, [ix](Tape& t, const Tensor& g) {
    Tensor gx(t.value(ix).shape(), g.item());
    t.accumulate(ix, gx);
  });
}

Var slice_rows(Var x, std::size_t start, std::size_t count) {
  const auto& xv = x.value();
  if (count == 0 || start + count > xv.rows()) throw ShapeError("slice_rows out of range");
  const std::size_t c = xv.cols();
  std::vector<double> data(xv.data().begin() + static_cast<std::ptrdiff_t>(start * c),
                           xv.data().begin() + static_cast<std::ptrdiff_t>((start + count) * c));
  const auto ix = x.id();
  return x.tape().record(Tensor(matrix_shape(count, c), std::move(data)), {x},
                         [ix, start](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(ix)) return;
                           auto& buf = t.grad_buffer(ix);
                           const std::size_t off = start * g.cols();
                           for (std::size_t i = 0; i < g.size(); ++i) buf[off + i] += g[i];
                         });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
  const auto& xv = x.value();
  if (count == 0 || start + count > xv.cols()) throw ShapeError("slice_cols out of range");
  Tensor out(matrix_shape(xv.rows(), count));
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, start + c);
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, start](Tape& t, const Tensor& g) {
    if (!t.requires_grad(ix)) return;
    auto& buf = t.grad_buffer(ix);
    const std::size_t cols = t.value(ix).cols();
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) buf[r * cols + start + c] += g(r, c);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Tensor out(matrix_shape(rows, cols));
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, off + c) = v(r, c);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.cols();
  }
  return parts[0].tape().record(std::move(out), parts, [ids, offsets](Tape& t, const Tensor& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      auto& buf = t.grad_buffer(ids[k]);
      const std::size_t pc = t.value(ids[k]).cols();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < pc; ++c) buf[r * pc + c] += g(r, offsets[k] + c);
    }
  });
}

Var gather_rows(Var x, const std::vector<std::size_t>& rows) {
  const auto& xv = x.value();
  if (rows.empty()) throw ShapeError("gather_rows with no indices");
  const std::size_t c = xv.cols();
  Tensor out(matrix_shape(rows.size(), c));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) throw ShapeError("gather_rows index out of range");
    for (std::size_t j = 0; j < c; ++j) out(i, j) = xv(rows[i], j);
  }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, rows](Tape& t, const Tensor& g) {
    if (!t.requires_grad(ix)) return;
    auto& buf = t.grad_buffer(ix);
    const std::size_t c = g.cols();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) buf[rows[i] * c + j] += g(i, j);
  });
}

Var row_cosine(Var a, Var b, double eps) {
  require_same_shape(a.value(), b.value(), "row_cosine");
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = av.rows(), d = av.cols();
  Tensor out(matrix_shape(n, 1));
  for (std::size_t r = 0; r < n; ++r) {
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dot += av(r, c) * bv(r, c);
      aa += av(r, c) * av(r, c);
      bb += bv(r, c) * bv(r, c);
    }
    out(r, 0) = dot / std::max(std::sqrt(aa) * std::sqrt(bb), eps);
  }
  const auto ia = a.id(), ib = b.id();
  auto& tape = a.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {a, b}, [ia, ib, self, eps](Tape& t, const Tensor& g) {
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    const auto& cv = t.value(self);
    const std::size_t n = av.rows(), d = av.cols();
    Tensor ga(av.shape()), gb(bv.shape());
    for (std::size_t r = 0; r < n; ++r) {
      double aa = 0.0, bb = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        aa += av(r, c) * av(r, c);
        bb += bv(r, c) * bv(r, c);
      }
      const double na = std::sqrt(aa), nb = std::sqrt(bb);
      const double den = na * nb;
      const double gr = g(r, 0);
      const double cos = cv(r, 0);
      for (std::size_t c = 0; c < d; ++c) {
        if (den > eps) {
          ga(r, c) = gr * (bv(r, c) / den - cos * av(r, c) / aa);
          gb(r, c) = gr * (av(r, c) / den - cos * bv(r, c) / bb);
        } else {
          ga(r, c) = gr * bv(r, c) / eps;
          gb(r, c) = gr * av(r, c) / eps;
        }
      }
    }
    t.accumulate(ia, ga);
    t.accumulate(ib, gb);
  });
}

Var add_n(const std::vector<Var>& terms) {
  if (terms.empty()) throw ShapeError("add_n of nothing");
  Tensor out = terms[0].value();
  for (std::size_t k = 1; k < terms.size(); ++k) {
    require_same_shape(out, terms[k].value(), "add_n");
    const auto& v = terms[k].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  std::vector<std::size_t> ids;
  for (const auto& v : terms) ids.push_back(v.id());
  return terms[0].tape().record(std::move(out), terms, [ids](Tape& t, const Tensor& g) {
    for (auto id : ids) t.accumulate(id, g);
  });
}

Var dropout(Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw Error("dropout rate must be < 1");
  Tensor mask(x.value().shape());
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : mask.data()) m = rng.bernoulli(rate) ? 0.0 : keep;
  return mul(x, x.tape().constant(std::move(mask)));
}

Var detach(Var x) { return x.tape().constant(x.value()); }

}  // namespace cakt::ops
