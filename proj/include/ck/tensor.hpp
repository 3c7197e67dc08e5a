#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ck/probe.hpp"

namespace ck {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ')';
  return os.str();
}

// Backing buffer for tensor values. Registration with the installed
// AllocationProbe happens here so every transient the ops create is
// visible to the memory benchmark.
struct Storage {
  std::vector<double> v;
  AllocationProbe* probe = nullptr;
  std::string label;

  explicit Storage(std::size_t n) : v(n) {
    if (auto* p = detail::tls_probe()) {
      p->on_alloc(static_cast<std::int64_t>(n), detail::tls_label());
      probe = p;
      label = detail::tls_label();
    }
  }
  ~Storage() {
    if (probe) probe->on_free(static_cast<std::int64_t>(v.size()), label);
  }
  Storage(const Storage&) = delete;
  Storage& operator=(const Storage&) = delete;
};

class Tape;

// Immutable dense tensor of doubles with optional tape tracking.
// Rank 0 = scalar, rank 1 = vector, rank 2 = matrix.
class Tensor {
 public:
  Tensor() = default;

  static Tensor uninit(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.store_ = std::make_shared<Storage>(static_cast<std::size_t>(shape_numel(t.shape_)));
    return t;
  }
  static Tensor zeros(Shape shape) { return uninit(std::move(shape)); }
  static Tensor full(Shape shape, double value) {
    Tensor t = uninit(std::move(shape));
    for (auto& x : t.store_->v) x = value;
    return t;
  }
  static Tensor scalar(double value) { return full({}, value); }
  static Tensor from(std::vector<double> values, Shape shape) {
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
      throw std::invalid_argument("tensor: data size does not match shape " + shape_str(shape));
    Tensor t = uninit(std::move(shape));
    t.store_->v = std::move(values);
    return t;
  }
  static Tensor vec(std::vector<double> values) {
    Shape s{static_cast<int>(values.size())};
    return from(std::move(values), std::move(s));
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t numel() const { return shape_numel(shape_); }
  bool defined() const { return store_ != nullptr; }

  int rows() const {
    if (rank() != 2) throw std::logic_error("rows(): tensor is not rank 2, shape " + shape_str(shape_));
    return shape_[0];
  }
  int cols() const {
    if (rank() != 2) throw std::logic_error("cols(): tensor is not rank 2, shape " + shape_str(shape_));
    return shape_[1];
  }
  int dim0() const { return shape_.empty() ? 1 : shape_[0]; }

  const std::vector<double>& values() const { return store_->v; }
  const double* data() const { return store_->v.data(); }
  double* mut() { return store_->v.data(); }  // only before the tensor is shared

  double at(int i) const { return store_->v[static_cast<std::size_t>(i)]; }
  double at(int r, int c) const { return store_->v[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double scalar_value() const {
    if (numel() != 1) throw std::logic_error("scalar_value(): tensor has " + std::to_string(numel()) + " elements");
    return store_->v[0];
  }

  bool tracked() const { return node_ >= 0; }

  Shape shape_;
  std::shared_ptr<Storage> store_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Reverse-mode tape. Operations append nodes in execution order; the
// backward pass walks them strictly in reverse, accumulating gradients
// additively so fan-out is handled without special cases.
class Tape {
 public:
  struct Node {
    std::int64_t numel = 0;
    std::shared_ptr<Storage> value;  // keeps forward values alive for backward
    std::vector<double> grad;        // lazily allocated
    bool touched = false;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  // Registers a leaf (typically a model parameter) and returns a tracked
  // view sharing the same storage.
  Tensor watch(const Tensor& t) {
    Tensor out = t;
    out.tape_ = this;
    out.node_ = next_id();
    nodes_.push_back(Node{t.numel(), t.store_, {}, false, nullptr});
    return out;
  }

  int next_id() const { return static_cast<int>(nodes_.size()); }

  int push(const Tensor& out, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{out.numel(), out.store_, {}, false, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<double>& grad_buffer(int node) {
    Node& n = nodes_[static_cast<std::size_t>(node)];
    if (n.grad.empty()) n.grad.assign(static_cast<std::size_t>(n.numel), 0.0);
    return n.grad;
  }

  void accumulate(int node, const double* g, std::int64_t count) {
    if (node < 0) return;
    Node& n = nodes_[static_cast<std::size_t>(node)];
    auto& buf = grad_buffer(node);
    for (std::int64_t i = 0; i < count; ++i) buf[static_cast<std::size_t>(i)] += g[i];
    n.touched = true;
  }

  void accumulate_at(int node, std::int64_t index, double g) {
    if (node < 0) return;
    Node& n = nodes_[static_cast<std::size_t>(node)];
    grad_buffer(node)[static_cast<std::size_t>(index)] += g;
    n.touched = true;
  }

  const std::vector<double>& grad(int node) { return grad_buffer(node); }

  // Gradient of the last backward() w.r.t. a watched tensor; zeros when the
  // tensor never influenced the loss.
  std::vector<double> grad_of(const Tensor& t) {
    if (t.tape_ != this || t.node_ < 0)
      throw std::logic_error("grad_of: tensor is not tracked on this tape");
    Node& n = nodes_[static_cast<std::size_t>(t.node_)];
    if (!n.touched) return std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0);
    return n.grad;
  }

  void backward(const Tensor& loss) {
    if (loss.tape_ != this || loss.node_ < 0)
      throw std::logic_error("backward: loss is not tracked on this tape");
    if (loss.numel() != 1)
      throw std::logic_error("backward: loss must be a scalar, got shape " + shape_str(loss.shape_));
    double one = 1.0;
    accumulate(loss.node_, &one, 1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.touched && n.back) n.back(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

namespace detail {

inline Tape* result_tape(const Tensor& a) { return a.tracked() ? a.tape_ : nullptr; }

inline Tape* result_tape(const Tensor& a, const Tensor& b) {
  Tape* ta = a.tracked() ? a.tape_ : nullptr;
  Tape* tb = b.tracked() ? b.tape_ : nullptr;
  if (ta && tb && ta != tb) throw std::logic_error("operation mixes tensors from two different tapes");
  return ta ? ta : tb;
}

inline Tape* result_tape(const Tensor& a, const Tensor& b, const Tensor& c) {
  Tape* tab = result_tape(a, b);
  Tape* tc = c.tracked() ? c.tape_ : nullptr;
  if (tab && tc && tab != tc) throw std::logic_error("operation mixes tensors from two different tapes");
  return tab ? tab : tc;
}

inline void attach(Tensor& out, Tape* tape, std::function<void(Tape&)> back) {
  if (!tape) return;
  out.tape_ = tape;
  out.node_ = tape->push(out, std::move(back));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and broadcast binary operations

namespace detail {

enum class BinKind { kAdd, kSub, kMul, kDiv };

// Shapes must match exactly, or one operand must be a single element
// (scalar broadcast). Gradients reduce back onto the scalar side.
inline Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape())
    throw std::invalid_argument(std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  const Tensor& big = a_scalar && !b_scalar ? b : a;
  Tensor out = Tensor::uninit(big.shape());
  const std::int64_t n = out.numel();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.mut();
  for (std::int64_t i = 0; i < n; ++i) {
    double x = pa[a_scalar ? 0 : i];
    double y = pb[b_scalar ? 0 : i];
    switch (kind) {
      case BinKind::kAdd: po[i] = x + y; break;
      case BinKind::kSub: po[i] = x - y; break;
      case BinKind::kMul: po[i] = x * y; break;
      case BinKind::kDiv: po[i] = x / y; break;
    }
  }
  if (Tape* tp = result_tape(a, b)) {
    const int ia = a.node_, ib = b.node_, io = tp->next_id();
    auto sa = a.store_, sb = b.store_;
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      for (std::int64_t i = 0; i < n; ++i) {
        double x = sa->v[a_scalar ? 0 : static_cast<std::size_t>(i)];
        double y = sb->v[b_scalar ? 0 : static_cast<std::size_t>(i)];
        double ga = 0, gb = 0;
        switch (kind) {
          case BinKind::kAdd: ga = g[i]; gb = g[i]; break;
          case BinKind::kSub: ga = g[i]; gb = -g[i]; break;
          case BinKind::kMul: ga = g[i] * y; gb = g[i] * x; break;
          case BinKind::kDiv: ga = g[i] / y; gb = -g[i] * x / (y * y); break;
        }
        if (ia >= 0) t.accumulate_at(ia, a_scalar ? 0 : i, ga);
        if (ib >= 0) t.accumulate_at(ib, b_scalar ? 0 : i, gb);
      }
    });
  }
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinKind::kAdd, "add"); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinKind::kSub, "sub"); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinKind::kMul, "mul"); }
inline Tensor div(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinKind::kDiv, "div"); }

inline Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::uninit(a.shape());
  const std::int64_t n = a.numel();
  const double* pa = a.data();
  double* po = out.mut();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
  if (Tape* tp = detail::result_tape(a)) {
    const int ia = a.node_, io = tp->next_id();
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      for (std::int64_t i = 0; i < n; ++i) t.accumulate_at(ia, i, g[i] * c);
    });
  }
  return out;
}

inline Tensor add_const(const Tensor& a, double c) {
  Tensor out = Tensor::uninit(a.shape());
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.mut()[i] = a.data()[i] + c;
  if (Tape* tp = detail::result_tape(a)) {
    const int ia = a.node_, io = tp->next_id();
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      t.accumulate(ia, g.data(), n);
    });
  }
  return out;
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

namespace detail {

template <typename Fwd, typename Bwd>
inline Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd_factor_from_xy) {
  Tensor out = Tensor::uninit(a.shape());
  const std::int64_t n = a.numel();
  const double* pa = a.data();
  double* po = out.mut();
  for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  if (Tape* tp = result_tape(a)) {
    const int ia = a.node_, io = tp->next_id();
    auto sa = a.store_, so = out.store_;
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        t.accumulate_at(ia, i, g[i] * bwd_factor_from_xy(sa->v[u], so->v[u]));
      }
    });
  }
  return out;
}

}  // namespace detail

inline Tensor relu(const Tensor& a) {
  // gradient at exactly 0 is defined as 0
  return detail::unary_op(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  const double* pa = a.data();
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (pa[i] <= 0.0)
      throw std::domain_error("log: non-positive input " + std::to_string(pa[i]));
  return detail::unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor sqrt(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

inline Tensor clamp_min(const Tensor& a, double floor) {
  return detail::unary_op(
      a, [floor](double x) { return x < floor ? floor : x; },
      [floor](double x, double) { return x >= floor ? 1.0 : 0.0; });
}

// log(1 + exp(-x)), evaluated without overflow for large |x|.
inline Tensor softplus_neg(const Tensor& a) {
  auto fwd = [](double x) { return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); };
  // d/dx log(1+e^{-x}) = -1/(1+e^{x})
  auto bwd = [](double x, double) { return x >= 0 ? -std::exp(-x) / (1.0 + std::exp(-x)) : -1.0 / (1.0 + std::exp(x)); };
  return detail::unary_op(a, fwd, bwd);
}

// ---------------------------------------------------------------------------
// matrix operations

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw std::invalid_argument("matmul: dimension mismatch " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.mut();
  for (int i = 0; i < m; ++i) {
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    double* orow = po + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = pb + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (Tape* tp = detail::result_tape(a, b)) {
    const int ia = a.node_, ib = b.node_, io = tp->next_id();
    auto sa = a.store_, sb = b.store_;
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      if (ia >= 0) {
        auto& ga = t.grad_buffer(ia);
        // dA = G * B^T
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            double s = 0;
            const double* grow = g.data() + static_cast<std::size_t>(i) * n;
            const double* brow = sb->v.data() + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
            ga[static_cast<std::size_t>(i) * k + kk] += s;
          }
        t.accumulate(ia, nullptr, 0);  // mark touched
      }
      if (ib >= 0) {
        auto& gb = t.grad_buffer(ib);
        // dB = A^T * G
        for (int i = 0; i < m; ++i) {
          const double* arow = sa->v.data() + static_cast<std::size_t>(i) * k;
          const double* grow = g.data() + static_cast<std::size_t>(i) * n;
          for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            double* brow = gb.data() + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
        }
        t.accumulate(ib, nullptr, 0);
      }
    });
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required");
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::uninit({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.mut()[static_cast<std::size_t>(j) * m + i] = a.at(i, j);
  if (Tape* tp = detail::result_tape(a)) {
    const int ia = a.node_, io = tp->next_id();
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      auto& ga = t.grad_buffer(ia);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i)
          ga[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
      t.accumulate(ia, nullptr, 0);
    });
  }
  return out;
}

// Softmax along `axis` with max-subtraction. Rank-1 tensors use axis 0;
// rank-2 tensors accept axis 0 (down columns) or 1 (across rows).
inline Tensor softmax(const Tensor& a, int axis) {
  if (a.rank() == 1) {
    if (axis != 0) throw std::invalid_argument("softmax: axis out of range for rank-1 tensor");
  } else if (a.rank() == 2) {
    if (axis != 0 && axis != 1) throw std::invalid_argument("softmax: axis out of range for rank-2 tensor");
  } else {
    throw std::invalid_argument("softmax: rank-1 or rank-2 tensor required");
  }

  const int rows = a.rank() == 1 ? 1 : a.rows();
  const int cols = a.rank() == 1 ? static_cast<int>(a.numel()) : a.cols();
  const bool along_cols = a.rank() == 1 || axis == 1;  // normalize within each row
  const int slices = along_cols ? rows : cols;
  const int len = along_cols ? cols : rows;

  Tensor out = Tensor::uninit(a.shape());
  const double* pa = a.data();
  double* po = out.mut();
  auto idx = [&](int s, int i) -> std::size_t {
    return along_cols ? static_cast<std::size_t>(s) * cols + i
                      : static_cast<std::size_t>(i) * cols + s;
  };
  for (int s = 0; s < slices; ++s) {
    double mx = pa[idx(s, 0)];
    for (int i = 1; i < len; ++i) mx = std::max(mx, pa[idx(s, i)]);
    double sum = 0;
    for (int i = 0; i < len; ++i) {
      double e = std::exp(pa[idx(s, i)] - mx);
      po[idx(s, i)] = e;
      sum += e;
    }
    for (int i = 0; i < len; ++i) po[idx(s, i)] /= sum;
  }
  if (Tape* tp = detail::result_tape(a)) {
    const int ia = a.node_, io = tp->next_id();
    auto so = out.store_;
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      auto& ga = t.grad_buffer(ia);
      for (int s = 0; s < slices; ++s) {
        double dot = 0;
        for (int i = 0; i < len; ++i) dot += g[idx(s, i)] * so->v[idx(s, i)];
        for (int i = 0; i < len; ++i)
          ga[idx(s, i)] += so->v[idx(s, i)] * (g[idx(s, i)] - dot);
      }
      t.accumulate(ia, nullptr, 0);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions, slicing, assembly

inline Tensor sum(const Tensor& a) {
  double s = 0;
  const double* pa = a.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) s += pa[i];
  Tensor out = Tensor::scalar(s);
  if (Tape* tp = detail::result_tape(a)) {
    const int ia = a.node_, io = tp->next_id();
    const std::int64_t n = a.numel();
    detail::attach(out, tp, [=](Tape& t) {
      const double g = t.grad(io)[0];
      auto& ga = t.grad_buffer(ia);
      for (std::int64_t i = 0; i < n; ++i) ga[static_cast<std::size_t>(i)] += g;
      t.accumulate(ia, nullptr, 0);
    });
  }
  return out;
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

inline Tensor row(const Tensor& a, int r) {
  if (a.rank() != 2 || r < 0 || r >= a.rows())
    throw std::invalid_argument("row: index " + std::to_string(r) + " out of range for " + shape_str(a.shape()));
  const int n = a.cols();
  Tensor out = Tensor::uninit({n});
  for (int j = 0; j < n; ++j) out.mut()[j] = a.at(r, j);
  if (Tape* tp = detail::result_tape(a)) {
    const int ia = a.node_, io = tp->next_id();
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      auto& ga = t.grad_buffer(ia);
      for (int j = 0; j < n; ++j) ga[static_cast<std::size_t>(r) * n + j] += g[j];
      t.accumulate(ia, nullptr, 0);
    });
  }
  return out;
}

inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
  if (a.rank() != 2 || c0 < 0 || c1 > a.cols() || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                                ") for " + shape_str(a.shape()));
  const int m = a.rows(), w = c1 - c0, n = a.cols();
  Tensor out = Tensor::uninit({m, w});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out.mut()[static_cast<std::size_t>(i) * w + j] = a.at(i, c0 + j);
  if (Tape* tp = detail::result_tape(a)) {
    const int ia = a.node_, io = tp->next_id();
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      auto& ga = t.grad_buffer(ia);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j)
          ga[static_cast<std::size_t>(i) * n + c0 + j] += g[static_cast<std::size_t>(i) * w + j];
      t.accumulate(ia, nullptr, 0);
    });
  }
  return out;
}

inline Tensor slice_vec(const Tensor& a, int i0, int i1) {
  if (a.rank() != 1 || i0 < 0 || i1 > a.dim0() || i0 >= i1)
    throw std::invalid_argument("slice_vec: bad range for " + shape_str(a.shape()));
  const int w = i1 - i0;
  Tensor out = Tensor::uninit({w});
  for (int i = 0; i < w; ++i) out.mut()[i] = a.at(i0 + i);
  if (Tape* tp = detail::result_tape(a)) {
    const int ia = a.node_, io = tp->next_id();
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      for (int i = 0; i < w; ++i) t.accumulate_at(ia, i0 + i, g[i]);
    });
  }
  return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  const int m = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.rows() != m)
      throw std::invalid_argument("concat_cols: row mismatch");
    total += p.cols();
  }
  Tensor out = Tensor::uninit({m, total});
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p.cols(); ++j)
        out.mut()[static_cast<std::size_t>(i) * total + off + j] = p.at(i, j);
    off += p.cols();
  }
  Tape* tp = nullptr;
  for (const auto& p : parts)
    if (p.tracked()) {
      if (tp && tp != p.tape_) throw std::logic_error("concat_cols: tensors from different tapes");
      tp = p.tape_;
    }
  if (tp) {
    std::vector<int> ids;
    std::vector<int> widths;
    for (const auto& p : parts) {
      ids.push_back(p.node_);
      widths.push_back(p.cols());
    }
    const int io = tp->next_id();
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      int o = 0;
      for (std::size_t p = 0; p < ids.size(); ++p) {
        const int w = widths[p];
        if (ids[p] >= 0) {
          auto& gp = t.grad_buffer(ids[p]);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
              gp[static_cast<std::size_t>(i) * w + j] += g[static_cast<std::size_t>(i) * total + o + j];
          t.accumulate(ids[p], nullptr, 0);
        }
        o += w;
      }
    });
  }
  return out;
}

inline Tensor pick(const Tensor& a, int i) {
  if (a.rank() != 1 || i < 0 || i >= a.dim0())
    throw std::invalid_argument("pick: index out of range");
  Tensor out = Tensor::scalar(a.at(i));
  if (Tape* tp = detail::result_tape(a)) {
    const int ia = a.node_, io = tp->next_id();
    detail::attach(out, tp, [=](Tape& t) { t.accumulate_at(ia, i, t.grad(io)[0]); });
  }
  return out;
}

inline Tensor stack_scalars(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("stack_scalars: empty input");
  Tensor out = Tensor::uninit({static_cast<int>(xs.size())});
  Tape* tp = nullptr;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].numel() != 1) throw std::invalid_argument("stack_scalars: non-scalar element");
    out.mut()[i] = xs[i].data()[0];
    if (xs[i].tracked()) {
      if (tp && tp != xs[i].tape_) throw std::logic_error("stack_scalars: tensors from different tapes");
      tp = xs[i].tape_;
    }
  }
  if (tp) {
    std::vector<int> ids;
    for (const auto& x : xs) ids.push_back(x.node_);
    const int io = tp->next_id();
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] >= 0) t.accumulate_at(ids[i], 0, g[i]);
    });
  }
  return out;
}

// mat[n x m] + vec[m] broadcast over rows
inline Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 1 || a.cols() != b.dim0())
    throw std::invalid_argument("add_rowvec: shape mismatch " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::uninit({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.mut()[static_cast<std::size_t>(i) * n + j] = a.at(i, j) + b.at(j);
  if (Tape* tp = detail::result_tape(a, b)) {
    const int ia = a.node_, ib = b.node_, io = tp->next_id();
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      if (ia >= 0) t.accumulate(ia, g.data(), static_cast<std::int64_t>(m) * n);
      if (ib >= 0) {
        auto& gb = t.grad_buffer(ib);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gb[j] += g[static_cast<std::size_t>(i) * n + j];
        t.accumulate(ib, nullptr, 0);
      }
    });
  }
  return out;
}

// Multiplies row i of `a` by the constant mask[i]; used to keep padding
// rows at exactly zero through the encoder stack.
inline Tensor mul_rows(const Tensor& a, const std::vector<double>& mask) {
  if (a.rank() != 2 || static_cast<int>(mask.size()) != a.rows())
    throw std::invalid_argument("mul_rows: mask size mismatch");
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::uninit({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.mut()[static_cast<std::size_t>(i) * n + j] = a.at(i, j) * mask[static_cast<std::size_t>(i)];
  if (Tape* tp = detail::result_tape(a)) {
    const int ia = a.node_, io = tp->next_id();
    detail::attach(out, tp, [=, msk = mask](Tape& t) {
      const auto& g = t.grad(io);
      auto& ga = t.grad_buffer(ia);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          ga[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(i) * n + j] * msk[static_cast<std::size_t>(i)];
      t.accumulate(ia, nullptr, 0);
    });
  }
  return out;
}

// Row-wise cosine similarity matrix: out[i][j] = cos(a_i, b_j).
// Zero-norm rows (padding) yield similarity 0 and propagate no gradient.
inline Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
    throw std::invalid_argument("cosine_rows: inner dimension mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const int p = a.rows(), q = b.rows(), h = a.cols();
  std::vector<double> na(static_cast<std::size_t>(p)), nb(static_cast<std::size_t>(q));
  for (int i = 0; i < p; ++i) {
    double s = 0;
    for (int k = 0; k < h; ++k) s += a.at(i, k) * a.at(i, k);
    na[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
  for (int j = 0; j < q; ++j) {
    double s = 0;
    for (int k = 0; k < h; ++k) s += b.at(j, k) * b.at(j, k);
    nb[static_cast<std::size_t>(j)] = std::sqrt(s);
  }
  Tensor out = Tensor::uninit({p, q});
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) {
      double denom = na[static_cast<std::size_t>(i)] * nb[static_cast<std::size_t>(j)];
      if (denom == 0.0) {
        out.mut()[static_cast<std::size_t>(i) * q + j] = 0.0;
        continue;
      }
      double dot = 0;
      for (int k = 0; k < h; ++k) dot += a.at(i, k) * b.at(j, k);
      out.mut()[static_cast<std::size_t>(i) * q + j] = dot / denom;
    }
  if (Tape* tp = detail::result_tape(a, b)) {
    const int ia = a.node_, ib = b.node_, io = tp->next_id();
    auto sa = a.store_, sb = b.store_, so = out.store_;
    detail::attach(out, tp, [=](Tape& t) {
      const auto& g = t.grad(io);
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < q; ++j) {
          const double gij = g[static_cast<std::size_t>(i) * q + j];
          if (gij == 0.0) continue;
          const double ni = na[static_cast<std::size_t>(i)], nj = nb[static_cast<std::size_t>(j)];
          if (ni == 0.0 || nj == 0.0) continue;
          const double c = so->v[static_cast<std::size_t>(i) * q + j];
          const double* ar = sa->v.data() + static_cast<std::size_t>(i) * h;
          const double* br = sb->v.data() + static_cast<std::size_t>(j) * h;
          if (ia >= 0) {
            auto& ga = t.grad_buffer(ia);
            for (int k = 0; k < h; ++k)
              ga[static_cast<std::size_t>(i) * h + k] += gij * (br[k] / (ni * nj) - c * ar[k] / (ni * ni));
          }
          if (ib >= 0) {
            auto& gb = t.grad_buffer(ib);
            for (int k = 0; k < h; ++k)
              gb[static_cast<std::size_t>(j) * h + k] += gij * (ar[k] / (ni * nj) - c * br[k] / (nj * nj));
          }
        }
      if (ia >= 0) t.accumulate(ia, nullptr, 0);
      if (ib >= 0) t.accumulate(ib, nullptr, 0);
    });
  }
  return out;
}

// Shape-only view; shares storage and tape node, so gradients flow through
// unchanged.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                                shape_str(shape));
  Tensor out = a;
  out.shape_ = std::move(shape);
  return out;
}

inline bool all_finite(const Tensor& t) {
  for (std::int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t.data()[i])) return false;
  return true;
}

}  // namespace ck
