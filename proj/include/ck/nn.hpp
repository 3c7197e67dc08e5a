#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ck/random.hpp"
#include "ck/tensor.hpp"

namespace ck {

// Same-length grouped 1-D convolution over a sequence of feature rows.
// x: n x h, weight: h x (window * h/groups), bias: h. Channels are split
// into `groups` independent blocks; output channel c reads only the input
// channels of its own block. Symmetric zero padding of (window-1)/2.
inline Tensor grouped_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int window,
                             int groups) {
  if (x.rank() != 2) throw std::invalid_argument("grouped_conv1d: rank-2 input required");
  const int n = x.rows(), h = x.cols();
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("grouped_conv1d: window must be odd, got " + std::to_string(window));
  if (groups < 1 || h % groups != 0)
    throw std::invalid_argument("grouped_conv1d: channels " + std::to_string(h) +
                                " not divisible by groups " + std::to_string(groups));
  const int ipg = h / groups;  // input channels per group
  if (weight.rank() != 2 || weight.rows() != h || weight.cols() != window * ipg)
    throw std::invalid_argument("grouped_conv1d: weight shape " + shape_str(weight.shape()) +
                                " does not match channels/window/groups");
  if (bias.rank() != 1 || bias.dim0() != h)
    throw std::invalid_argument("grouped_conv1d: bias shape mismatch");
  const int pad = (window - 1) / 2;

  Tensor out = Tensor::uninit({n, h});
  const double* px = x.data();
  const double* pw = weight.data();
  const double* pb = bias.data();
  double* po = out.mut();
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < h; ++c) {
      const int gbase = (c / ipg) * ipg;
      const double* wrow = pw + static_cast<std::size_t>(c) * window * ipg;
      double acc = pb[c];
      for (int t = 0; t < window; ++t) {
        const int src = i + t - pad;
        if (src < 0 || src >= n) continue;
        const double* xrow = px + static_cast<std::size_t>(src) * h + gbase;
        const double* wtap = wrow + static_cast<std::size_t>(t) * ipg;
        for (int k = 0; k < ipg; ++k) acc += wtap[k] * xrow[k];
      }
      po[static_cast<std::size_t>(i) * h + c] = acc;
    }
  }

  if (Tape* tp = detail::result_tape(x, weight, bias)) {
    const int ix = x.node_, iw = weight.node_, ib = bias.node_, io = tp->next_id();
    auto sx = x.store_, sw = weight.store_;
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < h; ++c) {
          const double gic = g[static_cast<std::size_t>(i) * h + c];
          if (gic == 0.0) continue;
          const int gbase = (c / ipg) * ipg;
          if (ib >= 0) t.accumulate_at(ib, c, gic);
          for (int tt = 0; tt < window; ++tt) {
            const int src = i + tt - pad;
            if (src < 0 || src >= n) continue;
            for (int k = 0; k < ipg; ++k) {
              const std::size_t widx = static_cast<std::size_t>(c) * window * ipg +
                                       static_cast<std::size_t>(tt) * ipg + k;
              const std::size_t xidx = static_cast<std::size_t>(src) * h + gbase + k;
              if (iw >= 0) t.accumulate_at(iw, static_cast<std::int64_t>(widx), gic * sx->v[xidx]);
              if (ix >= 0) t.accumulate_at(ix, static_cast<std::int64_t>(xidx), gic * sw->v[widx]);
            }
          }
        }
      }
    });
  }
  return out;
}

// Per-row layer normalization with learned gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  if (x.rank() != 2) throw std::invalid_argument("layer_norm: rank-2 input required");
  const int n = x.rows(), h = x.cols();
  if (gain.rank() != 1 || gain.dim0() != h || bias.rank() != 1 || bias.dim0() != h)
    throw std::invalid_argument("layer_norm: gain/bias shape mismatch");

  Tensor out = Tensor::uninit({n, h});
  std::vector<double> inv_sd(static_cast<std::size_t>(n)), mu(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double m = 0;
    for (int j = 0; j < h; ++j) m += x.at(i, j);
    m /= h;
    double v = 0;
    for (int j = 0; j < h; ++j) {
      double d = x.at(i, j) - m;
      v += d * d;
    }
    v /= h;
    const double is = 1.0 / std::sqrt(v + eps);
    mu[static_cast<std::size_t>(i)] = m;
    inv_sd[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < h; ++j)
      out.mut()[static_cast<std::size_t>(i) * h + j] = (x.at(i, j) - m) * is * gain.at(j) + bias.at(j);
  }

  if (Tape* tp = detail::result_tape(x, gain, bias)) {
    const int ix = x.node_, ig = gain.node_, ib = bias.node_, io = tp->next_id();
    auto sx = x.store_, sg = gain.store_;
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      for (int i = 0; i < n; ++i) {
        const double m = mu[static_cast<std::size_t>(i)];
        const double is = inv_sd[static_cast<std::size_t>(i)];
        double mean_gg = 0, mean_ggx = 0;
        for (int j = 0; j < h; ++j) {
          const double xhat = (sx->v[static_cast<std::size_t>(i) * h + j] - m) * is;
          const double gg = g[static_cast<std::size_t>(i) * h + j] * sg->v[static_cast<std::size_t>(j)];
          mean_gg += gg;
          mean_ggx += gg * xhat;
        }
        mean_gg /= h;
        mean_ggx /= h;
        for (int j = 0; j < h; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * h + j;
          const double xhat = (sx->v[idx] - m) * is;
          const double gout = g[idx];
          if (ig >= 0) t.accumulate_at(ig, j, gout * xhat);
          if (ib >= 0) t.accumulate_at(ib, j, gout);
          if (ix >= 0) {
            const double gg = gout * sg->v[static_cast<std::size_t>(j)];
            t.accumulate_at(ix, static_cast<std::int64_t>(idx), (gg - mean_gg - xhat * mean_ggx) * is);
          }
        }
      }
    });
  }
  return out;
}

// Gathers embedding rows for a sequence of term ids. Id 0 is the padding
// row: it reads the stored (all-zero) row and never receives gradient.
inline Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw std::invalid_argument("embedding_rows: rank-2 table required");
  const int v = table.rows(), h = table.cols();
  const int m = static_cast<int>(ids.size());
  Tensor out = Tensor::uninit({m, h});
  for (int i = 0; i < m; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= v)
      throw std::out_of_range("embedding_rows: id " + std::to_string(id) + " out of table range [0," +
                              std::to_string(v) + ")");
    for (int j = 0; j < h; ++j) out.mut()[static_cast<std::size_t>(i) * h + j] = table.at(id, j);
  }
  if (Tape* tp = detail::result_tape(table)) {
    const int it = table.node_, io = tp->next_id();
    detail::attach(out, tp, [=, ids_c = ids](Tape& t) {
      const auto& g = t.grad(io);
      auto& gt = t.grad_buffer(it);
      for (int i = 0; i < m; ++i) {
        const int id = ids_c[static_cast<std::size_t>(i)];
        if (id == 0) continue;  // padding row stays at zero gradient
        for (int j = 0; j < h; ++j)
          gt[static_cast<std::size_t>(id) * h + j] += g[static_cast<std::size_t>(i) * h + j];
      }
      t.accumulate(it, nullptr, 0);
    });
  }
  return out;
}

// Inverted dropout; identity when p == 0 or rng is null.
inline Tensor dropout(const Tensor& x, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const std::int64_t n = x.numel();
  std::vector<double> mask(static_cast<std::size_t>(n));
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::int64_t i = 0; i < n; ++i)
    mask[static_cast<std::size_t>(i)] = rng_uniform(*rng) < p ? 0.0 : keep_scale;
  Tensor out = Tensor::uninit(x.shape());
  for (std::int64_t i = 0; i < n; ++i) out.mut()[i] = x.data()[i] * mask[static_cast<std::size_t>(i)];
  if (Tape* tp = detail::result_tape(x)) {
    const int ix = x.node_, io = tp->next_id();
    detail::attach(out, tp, [=, msk = std::move(mask)](Tape& t) {
      const auto& g = t.grad(io);
      for (std::int64_t i = 0; i < n; ++i)
        t.accumulate_at(ix, i, g[i] * msk[static_cast<std::size_t>(i)]);
    });
  }
  return out;
}

// y = x * W + b as one call; W: in x out, b: out.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w), b);
}

}  // namespace ck
