#pragma once

#include <string>
#include <vector>

#include "ck/attention.hpp"
#include "ck/config.hpp"
#include "ck/nn.hpp"
#include "ck/optim.hpp"
#include "ck/tensor.hpp"
#include "ck/text.hpp"

namespace ck {

// Tensor handles for one Conformer block. Depending on how they were
// obtained these are either raw parameters (inference) or tape-watched
// views (training); the forward code is identical.
struct ConformerLayerParams {
  Tensor conv_w, conv_b;
  Tensor wq, wk, wv, wo;
  Tensor ln1_g, ln1_b;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor ln2_g, ln2_b;
};

struct EncoderParams {
  Tensor embedding;
  std::vector<ConformerLayerParams> layers;
};

// Per-call forward context: tape for training, dropout source, and which
// attention variant to run (standard exists only as the memory baseline).
struct EncodeMode {
  bool training = false;
  Rng* rng = nullptr;
  AttentionKind attention = AttentionKind::kSeparable;
};

inline Tensor multi_head_self_attention(const Tensor& x, const ConformerLayerParams& lp, int heads,
                                        AttentionKind kind) {
  Tensor q = matmul(x, lp.wq);
  Tensor k = matmul(x, lp.wk);
  Tensor v = matmul(x, lp.wv);
  const int dim = q.cols();
  const int dk = dim / heads;
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
    Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
    Tensor vh = slice_cols(v, h * dk, (h + 1) * dk);
    outs.push_back(self_attention(qh, kh, vh, kind));
  }
  Tensor cat = heads == 1 ? outs[0] : concat_cols(outs);
  return matmul(cat, lp.wo);
}

// One Conformer block: grouped convolution feeding separable multi-head
// self-attention inside the first residual branch, then the usual
// feed-forward sublayer. Padding rows (mask 0) are re-zeroed on the way
// out so they stay inert through the stack.
inline Tensor conformer_forward(const Tensor& x, const ConformerLayerParams& lp, const Config& cfg,
                                const EncodeMode& mode, const std::vector<double>& row_mask) {
  Tensor conv = grouped_conv1d(x, lp.conv_w, lp.conv_b, cfg.conv_window, cfg.conv_groups);
  Tensor attn = multi_head_self_attention(conv, lp, cfg.heads, mode.attention);
  if (mode.training) attn = dropout(attn, cfg.dropout, mode.rng);
  Tensor h1 = layer_norm(add(x, attn), lp.ln1_g, lp.ln1_b);
  Tensor ff = linear(relu(linear(h1, lp.ff_w1, lp.ff_b1)), lp.ff_w2, lp.ff_b2);
  if (mode.training) ff = dropout(ff, cfg.dropout, mode.rng);
  Tensor h2 = layer_norm(add(h1, ff), lp.ln2_g, lp.ln2_b);
  return mul_rows(h2, row_mask);
}

inline std::vector<double> padding_mask(const std::vector<int>& ids) {
  std::vector<double> mask(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) mask[i] = ids[i] == kPadId ? 0.0 : 1.0;
  return mask;
}

// Embedding lookup followed by the Conformer stack. A 0-layer
// configuration returns the raw (masked) embeddings.
inline Tensor encode_document(const TokenSequence& doc, const EncoderParams& enc, const Config& cfg,
                              const EncodeMode& mode) {
  if (doc.ids.empty()) throw std::invalid_argument("encode_document: empty document");
  const std::vector<double> mask = padding_mask(doc.ids);
  Tensor h = embedding_rows(enc.embedding, doc.ids);
  for (const auto& lp : enc.layers) h = conformer_forward(h, lp, cfg, mode, mask);
  return h;
}

// ---------------------------------------------------------------------------
// parameter construction and naming

inline std::string layer_param_name(int layer, const std::string& leaf) {
  return "layer" + std::to_string(layer) + "." + leaf;
}

inline void init_encoder_params(Parameters& params, const Config& cfg, int vocab_rows, Rng& rng) {
  auto uniform_tensor = [&](Shape shape, double bound) {
    Tensor t = Tensor::uninit(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.mut()[i] = rng_uniform(rng, -bound, bound);
    return t;
  };
  const int d = cfg.embedding_dim;
  params.add("embedding.table", init_embedding_table(vocab_rows, d, rng));
  const int ipg = d / cfg.conv_groups;
  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(cfg.conv_window * ipg));
  const double proj_bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (int l = 0; l < cfg.layers; ++l) {
    auto name = [&](const char* leaf) { return layer_param_name(l, leaf); };
    params.add(name("conv.w"), uniform_tensor({d, cfg.conv_window * ipg}, conv_bound));
    params.add(name("conv.b"), Tensor::zeros({d}));
    params.add(name("attn.wq"), uniform_tensor({d, d}, proj_bound));
    params.add(name("attn.wk"), uniform_tensor({d, d}, proj_bound));
    params.add(name("attn.wv"), uniform_tensor({d, d}, proj_bound));
    params.add(name("attn.wo"), uniform_tensor({d, d}, proj_bound));
    params.add(name("ln1.g"), Tensor::full({d}, 1.0));
    params.add(name("ln1.b"), Tensor::zeros({d}));
    params.add(name("ff.w1"), uniform_tensor({d, d}, proj_bound));
    params.add(name("ff.b1"), Tensor::zeros({d}));
    params.add(name("ff.w2"), uniform_tensor({d, d}, proj_bound));
    params.add(name("ff.b2"), Tensor::zeros({d}));
    params.add(name("ln2.g"), Tensor::full({d}, 1.0));
    params.add(name("ln2.b"), Tensor::zeros({d}));
  }
}

// Builds tensor handles from stored parameters, optionally watching each
// one on a tape; `watched` collects the tracked views for gradient lookup.
inline EncoderParams encoder_view(const Parameters& params, const Config& cfg, Tape* tape,
                                  std::unordered_map<std::string, Tensor>* watched) {
  auto get = [&](const std::string& name) {
    Tensor t = params.at(name);
    if (tape) {
      t = tape->watch(t);
      if (watched) (*watched)[name] = t;
    }
    return t;
  };
  EncoderParams enc;
  enc.embedding = get("embedding.table");
  for (int l = 0; l < cfg.layers; ++l) {
    auto name = [&](const char* leaf) { return layer_param_name(l, leaf); };
    ConformerLayerParams lp;
    lp.conv_w = get(name("conv.w"));
    lp.conv_b = get(name("conv.b"));
    lp.wq = get(name("attn.wq"));
    lp.wk = get(name("attn.wk"));
    lp.wv = get(name("attn.wv"));
    lp.wo = get(name("attn.wo"));
    lp.ln1_g = get(name("ln1.g"));
    lp.ln1_b = get(name("ln1.b"));
    lp.ff_w1 = get(name("ff.w1"));
    lp.ff_b1 = get(name("ff.b1"));
    lp.ff_w2 = get(name("ff.w2"));
    lp.ff_b2 = get(name("ff.b2"));
    lp.ln2_g = get(name("ln2.g"));
    lp.ln2_b = get(name("ln2.b"));
    enc.layers.push_back(std::move(lp));
  }
  return enc;
}

}  // namespace ck
