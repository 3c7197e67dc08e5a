#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ck/tensor.hpp"

namespace ck {

// Named model parameters with a stable iteration order.
class Parameters {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter name: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    values_.push_back(std::move(t));
    return values_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return values_[it->second];
  }

  void set(const std::string& name, Tensor t) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    if (t.shape() != values_[it->second].shape())
      throw std::logic_error("parameter " + name + " shape change " +
                             shape_str(values_[it->second].shape()) + " -> " + shape_str(t.shape()));
    values_[it->second] = std::move(t);
  }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::int64_t total_elements() const {
    std::int64_t n = 0;
    for (const auto& v : values_) n += v.numel();
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

using GradMap = std::unordered_map<std::string, std::vector<double>>;

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t t = 0;
  std::unordered_map<std::string, std::vector<double>> m;
  std::unordered_map<std::string, std::vector<double>> v;
};

// One Adam update over all parameters. Missing gradients count as zero;
// a non-finite gradient aborts, naming the offending parameter.
inline void optimizer_step(Parameters& params, const GradMap& grads, AdamState& state,
                           const AdamConfig& cfg = {}) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (const auto& name : params.names()) {
    const Tensor& p = params.at(name);
    const std::size_t n = static_cast<std::size_t>(p.numel());
    auto git = grads.find(name);
    static const std::vector<double> kEmpty;
    const std::vector<double>& g = git == grads.end() ? kEmpty : git->second;
    if (!g.empty() && g.size() != n)
      throw std::logic_error("gradient size mismatch for parameter " + name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != n) m.assign(n, 0.0);
    if (v.size() != n) v.assign(n, 0.0);
    Tensor next = Tensor::uninit(p.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      if (!std::isfinite(gi))
        throw std::runtime_error("non-finite gradient in parameter " + name + " at element " +
                                 std::to_string(i));
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      next.mut()[i] = p.data()[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    params.set(name, std::move(next));
  }
}

// Collects gradients for every parameter watched on `tape` after backward().
inline GradMap collect_grads(Tape& tape, const Parameters& params,
                             const std::unordered_map<std::string, Tensor>& watched) {
  GradMap out;
  for (const auto& name : params.names()) {
    auto it = watched.find(name);
    if (it == watched.end()) continue;
    out[name] = tape.grad_of(it->second);
  }
  return out;
}

inline void accumulate_grads(GradMap& into, const GradMap& from) {
  for (const auto& [name, g] : from) {
    auto& dst = into[name];
    if (dst.empty()) {
      dst = g;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  }
}

inline void scale_grads(GradMap& grads, double c) {
  for (auto& [name, g] : grads)
    for (auto& x : g) x *= c;
}

}  // namespace ck
