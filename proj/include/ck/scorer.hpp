#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ck/encoder.hpp"
#include "ck/kernels.hpp"
#include "ck/norm.hpp"

namespace ck {

// Learned blend weights of the latent and explicit channels plus the two
// document-length parameters of the explicit matcher.
struct DuetParams {
  Tensor w1, w2, b;        // scalars
  Tensor w_dlen, b_dlen;   // scalars
};

struct ModelView {
  EncoderParams encoder;
  AggregatorParams agg;
  DuetParams duet;
};

// Running statistics for the four normalization channels. Frozen (used in
// inference mode) once training has initialized them.
struct NormState {
  BatchNormChannel bn_latent;
  BatchNormChannel bn_explicit;
  BatchScaleChannel bs_tf;
  BatchScaleChannel bs_dlen;

  bool initialized() const {
    return bn_latent.initialized && bn_explicit.initialized && bs_tf.initialized &&
           bs_dlen.initialized;
  }
};

// Inputs of the explicit matcher for one (term, document) pair. TF and
// document length are computed on untruncated text.
struct TermStats {
  double idf = 0.0;
  double tf = 0.0;
  double dlen = 1.0;
};

// Smoothed BM25 idf, kept non-negative by the +1 inside the log.
inline double idf_value(std::uint64_t total_docs, std::uint64_t df) {
  const double n = static_cast<double>(total_docs);
  const double d = static_cast<double>(df);
  return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

// ---------------------------------------------------------------------------
// explicit channel

inline double explicit_term_score_infer(const TermStats& s, double w_dlen, double b_dlen,
                                        const NormState& norm) {
  const double tf = batch_scale_infer(s.tf, norm.bs_tf);
  const double dl = batch_scale_infer(s.dlen, norm.bs_dlen);
  const double len_term = std::max(0.0, w_dlen * dl + b_dlen);
  return s.idf * tf / (tf + len_term + kNormEps);
}

// Batched, differentiable form used during training. BS statistics are
// taken over the batch and the running means updated as a side effect.
inline Tensor explicit_term_score_train(const std::vector<double>& idf, const std::vector<double>& tf,
                                        const std::vector<double>& dlen, const DuetParams& duet,
                                        NormState& norm) {
  Tensor bs_tf = batch_scale_train(Tensor::vec(tf), norm.bs_tf);
  Tensor bs_dl = batch_scale_train(Tensor::vec(dlen), norm.bs_dlen);
  Tensor len_term = relu(add(mul(bs_dl, duet.w_dlen), duet.b_dlen));
  Tensor denom = add_const(add(bs_tf, len_term), kNormEps);
  return mul(div(bs_tf, denom), Tensor::vec(idf));
}

// ---------------------------------------------------------------------------
// duet combination (per-term score)

inline Tensor duet_combine_train(const Tensor& latent_batch, const Tensor& explicit_batch,
                                 const DuetParams& duet, NormState& norm) {
  Tensor l = batch_norm_train(latent_batch, norm.bn_latent);
  Tensor e = batch_norm_train(explicit_batch, norm.bn_explicit);
  return add(add(mul(l, duet.w1), mul(e, duet.w2)), duet.b);
}

inline double duet_combine_infer(double latent, double explicit_score, double w1, double w2, double b,
                                 const NormState& norm) {
  return w1 * batch_norm_infer(latent, norm.bn_latent) +
         w2 * batch_norm_infer(explicit_score, norm.bn_explicit) + b;
}

// ---------------------------------------------------------------------------
// latent channel

inline Tensor latent_term_score(const Tensor& features, const AggregatorParams& agg) {
  return aggregator_mlp(features, agg);
}

// Latent score of one query-term embedding row against an encoded document.
inline Tensor latent_score_for_row(const Tensor& interaction_row, const KernelBank& bank,
                                   const WindowConfig& wcfg, const std::vector<double>& doc_mask,
                                   const AggregatorParams& agg) {
  Tensor feats = windowed_kernel_pool(interaction_row, bank, wcfg, doc_mask, agg);
  return latent_term_score(feats, agg);
}

// ---------------------------------------------------------------------------
// inference-mode per-term and per-query scoring

struct TermScore {
  int term_id = 0;
  double latent = 0.0;
  double explicit_score = 0.0;
  double combined = 0.0;
};

inline WindowConfig window_config(const Config& cfg) {
  return WindowConfig{cfg.pool_window, cfg.pool_stride, cfg.pool_top_windows};
}

// Scores each term id independently against one encoded document using
// frozen normalization statistics; this is the quantity the impact index
// stores and the sum in query_document_score ranges over.
inline std::vector<TermScore> score_terms_infer(
    const std::vector<int>& term_ids, const Tensor& doc_enc, const std::vector<double>& doc_mask,
    const ModelView& view, const KernelBank& bank, const Config& cfg, const NormState& norm,
    const std::function<TermStats(int)>& stats_for_term) {
  if (!norm.initialized()) throw std::logic_error("uninitialized normalization statistics");
  const WindowConfig wcfg = window_config(cfg);
  Tensor q_emb = embedding_rows(view.encoder.embedding, term_ids);
  Tensor inter = cosine_rows(q_emb, doc_enc);
  const double w1 = view.duet.w1.scalar_value();
  const double w2 = view.duet.w2.scalar_value();
  const double b = view.duet.b.scalar_value();
  const double w_dlen = view.duet.w_dlen.scalar_value();
  const double b_dlen = view.duet.b_dlen.scalar_value();

  std::vector<TermScore> out;
  out.reserve(term_ids.size());
  for (std::size_t i = 0; i < term_ids.size(); ++i) {
    TermScore ts;
    ts.term_id = term_ids[i];
    Tensor latent = latent_score_for_row(row(inter, static_cast<int>(i)), bank, wcfg, doc_mask, view.agg);
    ts.latent = latent.scalar_value();
    ts.explicit_score =
        explicit_term_score_infer(stats_for_term(term_ids[i]), w_dlen, b_dlen, norm);
    ts.combined = duet_combine_infer(ts.latent, ts.explicit_score, w1, w2, b, norm);
    out.push_back(ts);
  }
  return out;
}

// S_{q,d}: plain sum of per-term scores in query order (duplicates count
// once per occurrence; padding ids contribute zero).
inline double query_document_score(const TokenSequence& query, const Tensor& doc_enc,
                                   const std::vector<double>& doc_mask, const ModelView& view,
                                   const KernelBank& bank, const Config& cfg, const NormState& norm,
                                   const std::function<TermStats(int)>& stats_for_term) {
  if (query.ids.empty()) throw std::invalid_argument("empty query");
  std::vector<int> real_ids;
  real_ids.reserve(query.ids.size());
  for (int id : query.ids)
    if (id != kPadId) real_ids.push_back(id);
  if (real_ids.empty()) return 0.0;
  auto scores = score_terms_infer(real_ids, doc_enc, doc_mask, view, bank, cfg, norm, stats_for_term);
  double s = 0.0;
  for (const auto& ts : scores) s += ts.combined;
  return s;
}

}  // namespace ck
