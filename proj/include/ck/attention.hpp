#pragma once

#include <cmath>
#include <stdexcept>

#include "ck/probe.hpp"
#include "ck/tensor.hpp"

namespace ck {

enum class AttentionKind { kSeparable, kStandard };

// Scaled dot-product self-attention. Materializes the full n x n term-term
// matrix; that buffer is what the memory benchmark tracks under the
// "attn_matrix" label, so the 1/sqrt(d_k) scaling is folded into Q to keep
// exactly one n x n allocation carrying the label.
inline Tensor standard_self_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw std::invalid_argument("standard_self_attention: rank-2 inputs required");
  if (q.cols() != k.cols() || q.rows() != k.rows() || k.rows() != v.rows())
    throw std::invalid_argument("standard_self_attention: shape mismatch " + shape_str(q.shape()) +
                                ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor qs = scale(q, inv_sqrt_dk);
  Tensor kt = transpose(k);
  Tensor logits;
  {
    ProbeLabel label("attn_matrix");
    logits = matmul(qs, kt);
  }
  Tensor probs = softmax(logits, 1);
  return matmul(probs, v);
}

// Separable self-attention: A = softmax_n(K^T) * V is formed first
// (d_key x d_value), then softmax_dkey(Q) * A. No n x n buffer ever
// exists; every transient here is linear in n and carries the
// "attn_separable" label.
inline Tensor separable_self_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw std::invalid_argument("separable_self_attention: rank-2 inputs required");
  if (q.cols() != k.cols() || k.rows() != v.rows())
    throw std::invalid_argument("separable_self_attention: shape mismatch " + shape_str(q.shape()) +
                                ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  ProbeLabel label("attn_separable");
  // softmax over the sequence dimension of K^T == column softmax of K
  Tensor k_col = softmax(k, 0);
  Tensor a = matmul(transpose(k_col), v);
  Tensor q_row = softmax(q, 1);
  return matmul(q_row, a);
}

inline Tensor self_attention(const Tensor& q, const Tensor& k, const Tensor& v, AttentionKind kind) {
  return kind == AttentionKind::kSeparable ? separable_self_attention(q, k, v)
                                           : standard_self_attention(q, k, v);
}

}  // namespace ck
