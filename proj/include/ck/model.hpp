#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>

#include "ck/config.hpp"
#include "ck/io.hpp"
#include "ck/optim.hpp"
#include "ck/scorer.hpp"
#include "ck/text.hpp"

namespace ck {

// Full Conformer-Kernel ranking model: encoder stack, shared aggregation
// MLP, duet blend weights, explicit-matcher parameters, normalization
// statistics, and the fixed kernel bank.
class CkModel {
 public:
  Config cfg;
  Parameters params;
  NormState norm;
  KernelBank bank;
  std::uint64_t vocab_hash = 0;
  std::uint64_t step = 0;

  static CkModel init(const Config& cfg, std::uint64_t vocab_hash, int vocab_rows) {
    cfg.validate();
    CkModel m;
    m.cfg = cfg;
    m.bank = make_kernel_bank(cfg.kernels);
    m.vocab_hash = vocab_hash;
    Rng rng = make_rng(cfg.seed);
    init_encoder_params(m.params, cfg, vocab_rows, rng);
    const int k = cfg.kernels;
    const double agg_bound = 1.0 / std::sqrt(static_cast<double>(k));
    auto uniform_tensor = [&](Shape shape, double bound) {
      Tensor t = Tensor::uninit(shape);
      for (std::int64_t i = 0; i < t.numel(); ++i) t.mut()[i] = rng_uniform(rng, -bound, bound);
      return t;
    };
    m.params.add("agg.w1", uniform_tensor({k, k}, agg_bound));
    m.params.add("agg.b1", Tensor::zeros({k}));
    m.params.add("agg.w2", uniform_tensor({k, 1}, agg_bound));
    m.params.add("agg.b2", Tensor::zeros({1}));
    m.params.add("duet.w1", Tensor::scalar(1.0));
    m.params.add("duet.w2", Tensor::scalar(1.0));
    m.params.add("duet.b", Tensor::scalar(0.0));
    m.params.add("explicit.w_dlen", Tensor::scalar(1.0));
    m.params.add("explicit.b_dlen", Tensor::scalar(0.0));
    return m;
  }

  // Tensor handles over the stored parameters; pass a tape to get tracked
  // views for a training step (watched names are recorded for gradient
  // collection).
  ModelView view(Tape* tape = nullptr,
                 std::unordered_map<std::string, Tensor>* watched = nullptr) const {
    ModelView v;
    v.encoder = encoder_view(params, cfg, tape, watched);
    auto get = [&](const std::string& name) {
      Tensor t = params.at(name);
      if (tape) {
        t = tape->watch(t);
        if (watched) (*watched)[name] = t;
      }
      return t;
    };
    v.agg.w1 = get("agg.w1");
    v.agg.b1 = get("agg.b1");
    v.agg.w2 = get("agg.w2");
    v.agg.b2 = get("agg.b2");
    v.duet.w1 = get("duet.w1");
    v.duet.w2 = get("duet.w2");
    v.duet.b = get("duet.b");
    v.duet.w_dlen = get("explicit.w_dlen");
    v.duet.b_dlen = get("explicit.b_dlen");
    return v;
  }

  int vocab_rows() const { return params.at("embedding.table").rows(); }
};

// ---------------------------------------------------------------------------
// checkpoint format: magic "CKQTI1", little-endian, sections for
// config / vocab hash / step / parameters / optimizer / normalization.

struct Checkpoint {
  CkModel model;
  AdamState adam;
};

inline std::string serialize_checkpoint(const CkModel& model, const AdamState& adam) {
  ByteWriter w;
  w.magic("CKQTI1");
  w.str(model.cfg.serialize());
  w.u64(model.vocab_hash);
  w.u64(model.step);
  w.u8(model.norm.initialized() ? 1 : 0);
  w.u64(model.params.size());
  for (const auto& name : model.params.names()) {
    const Tensor& t = model.params.at(name);
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) w.u64(static_cast<std::uint64_t>(d));
    w.f64s(t.values());
  }
  w.u64(adam.t);
  w.u64(model.params.size());
  for (const auto& name : model.params.names()) {
    w.str(name);
    auto mit = adam.m.find(name);
    auto vit = adam.v.find(name);
    static const std::vector<double> kEmpty;
    w.f64s(mit == adam.m.end() ? kEmpty : mit->second);
    w.f64s(vit == adam.v.end() ? kEmpty : vit->second);
  }
  w.f64(model.norm.bn_latent.running_mean);
  w.f64(model.norm.bn_latent.running_var);
  w.u8(model.norm.bn_latent.initialized ? 1 : 0);
  w.f64(model.norm.bn_explicit.running_mean);
  w.f64(model.norm.bn_explicit.running_var);
  w.u8(model.norm.bn_explicit.initialized ? 1 : 0);
  w.f64(model.norm.bs_tf.running_mean);
  w.u8(model.norm.bs_tf.initialized ? 1 : 0);
  w.f64(model.norm.bs_dlen.running_mean);
  w.u8(model.norm.bs_dlen.initialized ? 1 : 0);
  return w.bytes();
}

inline Checkpoint deserialize_checkpoint(ByteReader& r) {
  r.expect_magic("CKQTI1", "checkpoint");
  Checkpoint ck;
  ck.model.cfg = Config::parse(r.str());
  ck.model.bank = make_kernel_bank(ck.model.cfg.kernels);
  ck.model.vocab_hash = r.u64();
  ck.model.step = r.u64();
  r.u8();  // initialized flag, re-derived from channel sections below
  const std::uint64_t n_params = r.u64();
  for (std::uint64_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    const int rank = r.u8();
    Shape shape;
    for (int d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u64()));
    std::vector<double> data = r.f64s();
    ck.model.params.add(name, Tensor::from(std::move(data), std::move(shape)));
  }
  ck.adam.t = r.u64();
  const std::uint64_t n_adam = r.u64();
  for (std::uint64_t i = 0; i < n_adam; ++i) {
    std::string name = r.str();
    std::vector<double> m = r.f64s();
    std::vector<double> v = r.f64s();
    if (!m.empty()) ck.adam.m[name] = std::move(m);
    if (!v.empty()) ck.adam.v[name] = std::move(v);
  }
  auto& nm = ck.model.norm;
  nm.bn_latent.running_mean = r.f64();
  nm.bn_latent.running_var = r.f64();
  nm.bn_latent.initialized = r.u8() != 0;
  nm.bn_explicit.running_mean = r.f64();
  nm.bn_explicit.running_var = r.f64();
  nm.bn_explicit.initialized = r.u8() != 0;
  nm.bs_tf.running_mean = r.f64();
  nm.bs_tf.initialized = r.u8() != 0;
  nm.bs_dlen.running_mean = r.f64();
  nm.bs_dlen.initialized = r.u8() != 0;
  if (!r.at_end()) throw DataError("trailing bytes after checkpoint payload");
  return ck;
}

inline void save_checkpoint(const std::string& path, const CkModel& model, const AdamState& adam) {
  write_text_file(path, serialize_checkpoint(model, adam));
}

struct LoadedCheckpoint {
  Checkpoint ck;
  std::uint64_t file_hash = 0;  // FNV-1a over the serialized bytes
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  LoadedCheckpoint out;
  out.file_hash = fnv1a64(r.bytes());
  out.ck = deserialize_checkpoint(r);
  return out;
}

}  // namespace ck
