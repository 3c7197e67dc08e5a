#pragma once

#include <stdexcept>

#include "ck/tensor.hpp"

namespace ck {

constexpr double kNormEps = 1e-6;        // the "small constant" of BS and the explicit matcher
constexpr double kBnVarianceFloor = 1e-5;
constexpr double kNormMomentum = 0.1;

struct BatchNormChannel {
  double running_mean = 0.0;
  double running_var = 1.0;
  bool initialized = false;
};

struct BatchScaleChannel {
  double running_mean = 0.0;
  bool initialized = false;
};

// BN(x) = (x - E[x]) / sqrt(Var[x]), population variance over the batch,
// floored so constant batches normalize to zero instead of blowing up.
// Gradients flow through the batch statistics.
inline Tensor batch_norm_train(const Tensor& x, BatchNormChannel& ch) {
  if (x.rank() != 1 || x.dim0() < 2)
    throw std::invalid_argument("batch_norm: training requires a batch of at least 2 values");
  Tensor m = mean(x);
  Tensor centered = sub(x, m);
  Tensor var = mean(mul(centered, centered));
  Tensor out = div(centered, sqrt(clamp_min(var, kBnVarianceFloor)));
  ch.running_mean = (1.0 - kNormMomentum) * ch.running_mean + kNormMomentum * m.scalar_value();
  ch.running_var = (1.0 - kNormMomentum) * ch.running_var + kNormMomentum * var.scalar_value();
  ch.initialized = true;
  return out;
}

inline double batch_norm_infer(double x, const BatchNormChannel& ch) {
  if (!ch.initialized) throw std::logic_error("uninitialized normalization statistics");
  const double v = ch.running_var < kBnVarianceFloor ? kBnVarianceFloor : ch.running_var;
  return (x - ch.running_mean) / std::sqrt(v);
}

inline Tensor batch_norm_infer(const Tensor& x, const BatchNormChannel& ch) {
  if (!ch.initialized) throw std::logic_error("uninitialized normalization statistics");
  const double v = ch.running_var < kBnVarianceFloor ? kBnVarianceFloor : ch.running_var;
  return scale(add_const(x, -ch.running_mean), 1.0 / std::sqrt(v));
}

// BS(x) = x / (E[x] + eps) for non-negative batches.
inline Tensor batch_scale_train(const Tensor& x, BatchScaleChannel& ch) {
  if (x.rank() != 1 || x.dim0() < 2)
    throw std::invalid_argument("batch_scale: training requires a batch of at least 2 values");
  Tensor m = mean(x);
  Tensor out = div(x, add_const(m, kNormEps));
  ch.running_mean = (1.0 - kNormMomentum) * ch.running_mean + kNormMomentum * m.scalar_value();
  ch.initialized = true;
  return out;
}

inline double batch_scale_infer(double x, const BatchScaleChannel& ch) {
  if (!ch.initialized) throw std::logic_error("uninitialized normalization statistics");
  return x / (ch.running_mean + kNormEps);
}

}  // namespace ck
