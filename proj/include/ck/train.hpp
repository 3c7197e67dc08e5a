#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "ck/corpus.hpp"
#include "ck/model.hpp"
#include "ck/trec.hpp"

namespace ck {

// Stable pairwise RankNet loss: log(1 + exp(-(s_hi - s_lo))).
inline double ranknet_loss(double s_hi, double s_lo) {
  const double m = s_hi - s_lo;
  return m >= 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

// One sampled training example: the labeled positive, one negative from
// the query's top-100 candidates, two from the full collection. All four
// documents are distinct by construction.
struct TrainingExample {
  std::size_t positive = 0;
  std::size_t cand_neg = 0;
  std::size_t coll_neg1 = 0;
  std::size_t coll_neg2 = 0;
};

struct DocPair {
  std::size_t hi = 0;
  std::size_t lo = 0;
};

// The 5-pair pattern: positive over all three negatives, plus the
// weak-supervision pairs preferring the candidate negative over both
// collection negatives.
inline std::vector<DocPair> build_pairs(const TrainingExample& ex) {
  return {
      {ex.positive, ex.cand_neg},  {ex.positive, ex.coll_neg1}, {ex.positive, ex.coll_neg2},
      {ex.cand_neg, ex.coll_neg1}, {ex.cand_neg, ex.coll_neg2},
  };
}

// A positive (query, document) pair that survived validation. Query terms
// keep their surface form so the explicit channel can use corpus
// statistics even for out-of-vocabulary terms.
struct PositiveExample {
  std::string qid;
  std::vector<std::pair<int, std::string>> query_terms;  // (vocab id, term)
  std::size_t positive_doc = 0;
  std::vector<std::size_t> candidate_pool;  // top-100 docs, positive excluded
};

struct TrainData {
  std::vector<PositiveExample> examples;
  std::uint64_t skipped = 0;
};

inline std::vector<std::pair<int, std::string>> query_terms_for(const std::string& text,
                                                                const Vocabulary& vocab,
                                                                int query_max_len) {
  auto terms = tokenize(text);
  if (static_cast<int>(terms.size()) > query_max_len)
    terms.resize(static_cast<std::size_t>(query_max_len));
  std::vector<std::pair<int, std::string>> out;
  out.reserve(terms.size());
  for (auto& t : terms) out.emplace_back(vocab.id(t), std::move(t));
  return out;
}

// Joins the positives, queries, and candidates run into validated
// examples; rows referencing unknown documents/queries are skipped with a
// logged warning.
inline TrainData prepare_train_data(const DocumentStore& store, const Vocabulary& vocab,
                                    const std::vector<std::pair<std::string, std::string>>& positives,
                                    const std::vector<Query>& queries, const RunFile& candidates,
                                    const Config& cfg, std::ostream& log = std::cerr) {
  TrainData data;
  std::unordered_map<std::string, std::string> query_text;
  for (const auto& q : queries) query_text[q.qid] = q.text;
  for (const auto& [qid, docid] : positives) {
    auto warn_skip = [&](const std::string& why) {
      data.skipped += 1;
      if (data.skipped <= 16) log << "train: skipping example qid=" << qid << ": " << why << "\n";
    };
    auto qt = query_text.find(qid);
    if (qt == query_text.end()) {
      warn_skip("query text not found");
      continue;
    }
    if (!store.has(docid)) {
      warn_skip("positive document " + docid + " not in corpus");
      continue;
    }
    PositiveExample ex;
    ex.qid = qid;
    ex.query_terms = query_terms_for(qt->second, vocab, cfg.query_max_len);
    if (ex.query_terms.empty()) {
      warn_skip("empty query after tokenization");
      continue;
    }
    ex.positive_doc = store.index_of(docid);
    auto cit = candidates.find(qid);
    if (cit != candidates.end()) {
      for (const auto& e : cit->second) {
        if (!store.has(e.docid)) continue;
        const std::size_t idx = store.index_of(e.docid);
        if (idx != ex.positive_doc) ex.candidate_pool.push_back(idx);
      }
    }
    if (ex.candidate_pool.empty()) {
      warn_skip("no usable top-100 candidates");
      continue;
    }
    data.examples.push_back(std::move(ex));
  }
  return data;
}

inline TrainingExample sample_negatives(const PositiveExample& ex, std::size_t corpus_size, Rng& rng) {
  TrainingExample t;
  t.positive = ex.positive_doc;
  t.cand_neg = ex.candidate_pool[rng_index(rng, ex.candidate_pool.size())];
  do {
    t.coll_neg1 = rng_index(rng, corpus_size);
  } while (t.coll_neg1 == t.positive || t.coll_neg1 == t.cand_neg);
  do {
    t.coll_neg2 = rng_index(rng, corpus_size);
  } while (t.coll_neg2 == t.positive || t.coll_neg2 == t.cand_neg || t.coll_neg2 == t.coll_neg1);
  return t;
}

// RankNet training with deterministic gradient accumulation over
// micro-batches. A statistics warm-up (forward only) precedes step 1 so
// even a 0-step run yields a checkpoint usable for inference.
class Trainer {
 public:
  struct Result {
    std::vector<double> step_losses;
    std::uint64_t steps_run = 0;
  };

  // kind is "step0", "periodic" or "final"
  using CheckpointFn =
      std::function<void(const CkModel&, const AdamState&, std::uint64_t, const std::string&)>;

  Trainer(CkModel& model, AdamState& adam, const DocumentStore& store, const Vocabulary& vocab,
          TrainData data)
      : model_(model),
        adam_(adam),
        store_(store),
        vocab_(vocab),
        stats_(store),
        data_(std::move(data)) {
    if (data_.examples.empty()) throw DataError("train: no usable training examples");
    if (store_.size() < 4) throw DataError("train: corpus too small to sample negatives");
  }

  Result run(const CheckpointFn& on_checkpoint, std::ostream& log = std::cerr) {
    const Config& cfg = model_.cfg;
    Rng order_rng = make_rng(cfg.seed, 1);
    Rng sample_rng = make_rng(cfg.seed, 2);
    Rng dropout_rng = make_rng(cfg.seed, 3);

    std::vector<std::size_t> order(data_.examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = 0;
    auto reshuffle = [&] {
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng_index(order_rng, i)]);
      cursor = 0;
    };
    reshuffle();
    auto next_example = [&]() -> const PositiveExample& {
      if (cursor >= order.size()) reshuffle();
      return data_.examples[order[cursor++]];
    };

    // statistics warm-up: forward-only micro-batches, no dropout
    for (int w = 0; w < cfg.warmup_batches; ++w) {
      auto batch = draw_batch(cfg.micro_batch, next_example, sample_rng);
      ModelView view = model_.view();
      EncodeMode mode{true, nullptr, AttentionKind::kSeparable};
      micro_batch_loss(view, batch, mode);
    }
    if (!model_.norm.initialized())
      throw DataError("train: warmup_batches must be >= 1 to initialize normalization statistics");
    if (on_checkpoint) on_checkpoint(model_, adam_, 0, "step0");

    Result res;
    AdamConfig adam_cfg{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
    const int micros_per_step = (cfg.batch_size + cfg.micro_batch - 1) / cfg.micro_batch;
    for (int step = 1; step <= cfg.steps; ++step) {
      GradMap grads;
      double step_loss = 0.0;
      for (int mb = 0; mb < micros_per_step; ++mb) {
        const int want = std::min(cfg.micro_batch, cfg.batch_size - mb * cfg.micro_batch);
        auto batch = draw_batch(want, next_example, sample_rng);
        Tape tape;
        std::unordered_map<std::string, Tensor> watched;
        ModelView view = model_.view(&tape, &watched);
        EncodeMode mode{true, &dropout_rng, AttentionKind::kSeparable};
        Tensor loss = micro_batch_loss(view, batch, mode);
        const double lv = loss.scalar_value();
        if (!std::isfinite(lv))
          throw DataError("train: non-finite loss at step " + std::to_string(step) +
                          "; last good checkpoint retained");
        step_loss += lv;
        tape.backward(loss);
        accumulate_grads(grads, collect_grads(tape, model_.params, watched));
      }
      scale_grads(grads, 1.0 / micros_per_step);
      optimizer_step(model_.params, grads, adam_, adam_cfg);
      model_.step = static_cast<std::uint64_t>(step);
      res.step_losses.push_back(step_loss / micros_per_step);
      res.steps_run += 1;
      if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps &&
          on_checkpoint)
        on_checkpoint(model_, adam_, model_.step, "periodic");
      if (step % 50 == 0)
        log << "train: step " << step << "/" << cfg.steps << " loss " << res.step_losses.back()
            << "\n";
    }
    if (on_checkpoint) on_checkpoint(model_, adam_, model_.step, "final");
    return res;
  }

 private:
  struct BatchItem {
    const PositiveExample* ex = nullptr;
    TrainingExample docs;
  };

  template <typename NextFn>
  std::vector<BatchItem> draw_batch(int count, NextFn&& next_example, Rng& sample_rng) {
    std::vector<BatchItem> batch;
    batch.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const PositiveExample& ex = next_example();
      batch.push_back(BatchItem{&ex, sample_negatives(ex, store_.size(), sample_rng)});
    }
    return batch;
  }

  // Mean RankNet loss over all pairs of the micro-batch. BN/BS use batch
  // statistics here and update the running statistics as a side effect.
  Tensor micro_batch_loss(const ModelView& view, const std::vector<BatchItem>& batch,
                          EncodeMode mode) {
    const Config& cfg = model_.cfg;
    const WindowConfig wcfg = window_config(cfg);

    // encode each distinct document once per micro-batch
    std::map<std::size_t, Tensor> encodings;
    std::map<std::size_t, std::vector<double>> doc_masks;
    for (const auto& item : batch) {
      for (std::size_t d : {item.docs.positive, item.docs.cand_neg, item.docs.coll_neg1,
                            item.docs.coll_neg2}) {
        if (encodings.count(d)) continue;
        TokenSequence seq = to_ids(store_.doc(d).tokens, vocab_, cfg.doc_max_len);
        doc_masks[d] = padding_mask(seq.ids);
        encodings[d] = encode_document(seq, view.encoder, cfg, mode);
      }
    }

    // per-(term, document) latent scores and explicit-channel inputs
    std::vector<Tensor> latents;
    std::vector<double> idf_batch, tf_batch, dlen_batch;
    std::vector<std::array<std::vector<int>, 4>> slots(batch.size());
    const std::uint64_t n_docs = store_.size();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& item = batch[b];
      std::vector<int> qids;
      for (const auto& [id, term] : item.ex->query_terms) qids.push_back(id);
      Tensor q_emb = embedding_rows(view.encoder.embedding, qids);
      const std::array<std::size_t, 4> docs{item.docs.positive, item.docs.cand_neg,
                                            item.docs.coll_neg1, item.docs.coll_neg2};
      for (std::size_t role = 0; role < 4; ++role) {
        const std::size_t d = docs[role];
        Tensor inter = cosine_rows(q_emb, encodings[d]);
        for (std::size_t qi = 0; qi < item.ex->query_terms.size(); ++qi) {
          const auto& term = item.ex->query_terms[qi].second;
          latents.push_back(
              latent_score_for_row(row(inter, static_cast<int>(qi)), model_.bank, wcfg,
                                   doc_masks[d], view.agg));
          idf_batch.push_back(idf_value(n_docs, vocab_.df(term)));
          tf_batch.push_back(static_cast<double>(stats_.tf(term, d)));
          dlen_batch.push_back(static_cast<double>(stats_.doc_length(d)));
          slots[b][role].push_back(static_cast<int>(latents.size()) - 1);
        }
      }
    }

    Tensor latent_batch = stack_scalars(latents);
    Tensor explicit_batch =
        explicit_term_score_train(idf_batch, tf_batch, dlen_batch, view.duet, model_.norm);
    Tensor s_td = duet_combine_train(latent_batch, explicit_batch, view.duet, model_.norm);

    // S_{q,d} per (example, document role), then the 5 RankNet margins
    std::vector<Tensor> margins;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      std::array<Tensor, 4> scores;
      for (std::size_t role = 0; role < 4; ++role) {
        Tensor s = pick(s_td, slots[b][role][0]);
        for (std::size_t i = 1; i < slots[b][role].size(); ++i)
          s = add(s, pick(s_td, slots[b][role][i]));
        scores[role] = s;
      }
      // roles: 0 positive, 1 candidate negative, 2/3 collection negatives
      const std::pair<int, int> pair_roles[5] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}};
      for (const auto& [hi, lo] : pair_roles)
        margins.push_back(sub(scores[static_cast<std::size_t>(hi)], scores[static_cast<std::size_t>(lo)]));
    }
    return mean(softplus_neg(stack_scalars(margins)));
  }

  CkModel& model_;
  AdamState& adam_;
  const DocumentStore& store_;
  const Vocabulary& vocab_;
  CollectionStats stats_;
  TrainData data_;
};

// Positives TSV: `qid<TAB>docid`.
inline std::vector<std::pair<std::string, std::string>> load_positives(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("pairs file " + path + " line " + std::to_string(lineno) +
                      ": expected qid<TAB>docid");
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

}  // namespace ck
