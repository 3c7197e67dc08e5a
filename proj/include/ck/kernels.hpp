#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ck/nn.hpp"
#include "ck/tensor.hpp"

namespace ck {

// Floor added inside the log of kernel pooling: a similarity row far from
// every kernel underflows the exp-sum to zero, and log(0) is undefined.
constexpr double kKernelFloor = 1e-10;

// Gaussian kernels for soft-histogram pooling, KNRM placement: one
// exact-match kernel (mu = 1, sigma = 0.001) plus k-1 kernels with centers
// evenly spaced on [-1, 1) and shared sigma = 0.1.
struct KernelBank {
  std::vector<double> mu;
  std::vector<double> sigma;
  int size() const { return static_cast<int>(mu.size()); }
};

inline KernelBank make_kernel_bank(int k) {
  if (k < 2) throw std::invalid_argument("kernel bank needs at least 2 kernels");
  KernelBank bank;
  const int soft = k - 1;
  const double step = 2.0 / soft;
  for (int i = 0; i < soft; ++i) {
    bank.mu.push_back(-1.0 + step * (i + 0.5));
    bank.sigma.push_back(0.1);
  }
  bank.mu.push_back(1.0);
  bank.sigma.push_back(0.001);
  return bank;
}

// Soft-histogram features over one interaction-matrix row:
// feature_k = log(sum_j mask_j * exp(-(x_j - mu_k)^2 / (2 sigma_k^2)) + floor).
// A fully masked row degenerates to log(floor) for every kernel.
inline Tensor kernel_pool(const Tensor& row, const KernelBank& bank, const std::vector<double>& mask) {
  if (row.rank() != 1) throw std::invalid_argument("kernel_pool: rank-1 row required");
  const int n = row.dim0();
  if (static_cast<int>(mask.size()) != n) throw std::invalid_argument("kernel_pool: mask size mismatch");
  const int k = bank.size();
  Tensor out = Tensor::uninit({k});
  std::vector<double> sums(static_cast<std::size_t>(k));
  for (int kk = 0; kk < k; ++kk) {
    const double mu = bank.mu[static_cast<std::size_t>(kk)];
    const double inv2s2 = 1.0 / (2.0 * bank.sigma[static_cast<std::size_t>(kk)] * bank.sigma[static_cast<std::size_t>(kk)]);
    double s = 0;
    for (int j = 0; j < n; ++j) {
      if (mask[static_cast<std::size_t>(j)] == 0.0) continue;
      const double d = row.at(j) - mu;
      s += std::exp(-d * d * inv2s2);
    }
    sums[static_cast<std::size_t>(kk)] = s;
    out.mut()[kk] = std::log(s + kKernelFloor);
  }
  if (Tape* tp = detail::result_tape(row)) {
    const int ir = row.node_, io = tp->next_id();
    auto sr = row.store_;
    detail::attach(out, tp, [=, msk = mask, bank_c = bank, sums_c = std::move(sums)](Tape& t) {
      const auto& g = t.grad(io);
      auto& gr = t.grad_buffer(ir);
      for (int kk = 0; kk < k; ++kk) {
        if (g[kk] == 0.0) continue;
        const double mu = bank_c.mu[static_cast<std::size_t>(kk)];
        const double s2 = bank_c.sigma[static_cast<std::size_t>(kk)] * bank_c.sigma[static_cast<std::size_t>(kk)];
        const double coef = g[kk] / (sums_c[static_cast<std::size_t>(kk)] + kKernelFloor);
        for (int j = 0; j < n; ++j) {
          if (msk[static_cast<std::size_t>(j)] == 0.0) continue;
          const double d = sr->v[static_cast<std::size_t>(j)] - mu;
          gr[static_cast<std::size_t>(j)] += coef * std::exp(-d * d / (2.0 * s2)) * (-d / s2);
        }
      }
      t.accumulate(ir, nullptr, 0);
    });
  }
  return out;
}

struct WindowConfig {
  int window = 300;
  int stride = 100;
  int top_windows = 3;
};

// Window start offsets covering [0, n): fixed stride, last partial window
// kept, always at least one window.
inline std::vector<std::pair<int, int>> pooling_windows(int n, const WindowConfig& cfg) {
  std::vector<std::pair<int, int>> spans;
  for (int start = 0;; start += cfg.stride) {
    const int end = std::min(start + cfg.window, n);
    spans.emplace_back(start, end);
    if (end >= n) break;
  }
  return spans;
}

// Shared two-layer aggregation MLP (k -> k -> 1) applied per query term.
struct AggregatorParams {
  Tensor w1, b1, w2, b2;
};

inline Tensor aggregator_mlp(const Tensor& features, const AggregatorParams& agg) {
  Tensor x = reshape(features, {1, features.dim0()});
  Tensor hidden = relu(linear(x, agg.w1, agg.b1));
  Tensor out = linear(hidden, agg.w2, agg.b2);
  return pick(reshape(out, {1}), 0);
}

// Windowed kernel pooling: pool each window, score every window's feature
// vector with the shared aggregator, and average the feature vectors of
// the top `top_windows` windows (ties by earlier window). Degenerates to
// plain kernel pooling when one window covers the row.
inline Tensor windowed_kernel_pool(const Tensor& row, const KernelBank& bank, const WindowConfig& cfg,
                                   const std::vector<double>& mask, const AggregatorParams& agg) {
  const int n = row.dim0();
  const auto spans = pooling_windows(n, cfg);
  if (spans.size() == 1) return kernel_pool(row, bank, mask);

  std::vector<Tensor> feats;
  std::vector<double> scores;
  feats.reserve(spans.size());
  for (const auto& [b, e] : spans) {
    Tensor wrow = slice_vec(row, b, e);
    std::vector<double> wmask(mask.begin() + b, mask.begin() + e);
    Tensor f = kernel_pool(wrow, bank, wmask);
    feats.push_back(f);
    scores.push_back(aggregator_mlp(f, agg).scalar_value());
  }
  std::vector<int> order(spans.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    return a < b;
  });
  const int r = std::min<int>(cfg.top_windows, static_cast<int>(spans.size()));
  Tensor acc = feats[static_cast<std::size_t>(order[0])];
  for (int i = 1; i < r; ++i) acc = add(acc, feats[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  return scale(acc, 1.0 / r);
}

}  // namespace ck
