#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "ck/corpus.hpp"
#include "ck/model.hpp"

namespace ck {

// Impacts are stored at 32-bit precision; retrieval comparisons against
// the 64-bit exhaustive oracle are therefore specified at 1e-5.
struct Posting {
  std::uint32_t doc = 0;
  float impact = 0.0f;
};

struct PostingList {
  int term_id = 0;
  std::vector<Posting> entries;  // descending impact, ties by ascending doc
};

struct ImpactIndex {
  std::uint64_t doc_count = 0;
  std::uint64_t vocab_hash = 0;
  std::uint64_t checkpoint_hash = 0;
  std::vector<std::string> doc_names;  // internal doc id -> external docid
  std::string build_config;            // config snapshot used at build time
  double avg_doc_length = 0.0;         // stats snapshot
  std::map<int, PostingList> postings;

  const PostingList* find(int term_id) const {
    auto it = postings.find(term_id);
    return it == postings.end() ? nullptr : &it->second;
  }
};

inline void sort_by_impact(PostingList& pl) {
  std::sort(pl.entries.begin(), pl.entries.end(), [](const Posting& a, const Posting& b) {
    if (a.impact != b.impact) return a.impact > b.impact;
    return a.doc < b.doc;
  });
}

// ---------------------------------------------------------------------------
// offline precomputation

// Scores every (term, document) pair where the term occurs in the document
// and is in vocabulary: one document-encoder pass per document, one
// s_{t,d} per distinct occurring term. Requires initialized (frozen)
// normalization statistics.
inline ImpactIndex precompute_impacts(const CkModel& model, const Vocabulary& vocab,
                                      const DocumentStore& store, std::uint64_t checkpoint_hash) {
  if (!model.norm.initialized())
    throw DataError("precompute_impacts: checkpoint has uninitialized normalization statistics");
  if (model.vocab_hash != vocab.hash())
    throw DataError("precompute_impacts: vocabulary hash does not match the checkpoint");
  ImpactIndex index;
  index.doc_count = store.size();
  index.vocab_hash = vocab.hash();
  index.checkpoint_hash = checkpoint_hash;
  index.build_config = model.cfg.serialize();
  const Config& cfg = model.cfg;
  ModelView view = model.view();
  EncodeMode mode;  // inference, separable attention
  CollectionStats stats(store);
  index.avg_doc_length = stats.avg_doc_length();
  const std::uint64_t n_docs = store.size();

  for (std::size_t d = 0; d < store.size(); ++d) {
    const Document& doc = store.doc(d);
    index.doc_names.push_back(doc.docid);
    TokenSequence seq = to_ids(doc.tokens, vocab, cfg.doc_max_len);
    const std::vector<double> mask = padding_mask(seq.ids);
    Tensor enc = encode_document(seq, view.encoder, cfg, mode);

    std::vector<int> term_ids;
    std::vector<const std::string*> term_strs;
    for (const auto& [term, count] : doc.term_counts) {
      if (!vocab.contains(term)) continue;
      term_ids.push_back(vocab.id(term));
      term_strs.push_back(&term);
    }
    if (term_ids.empty()) continue;

    std::size_t cursor = 0;
    auto stats_for_term = [&](int) {
      const std::string& term = *term_strs[cursor];
      TermStats ts;
      ts.idf = idf_value(n_docs, vocab.df(term));
      ts.tf = static_cast<double>(doc.tf(term));
      ts.dlen = static_cast<double>(doc.length());
      ++cursor;
      return ts;
    };
    auto scores = score_terms_infer(term_ids, enc, mask, view, model.bank, cfg, model.norm,
                                    stats_for_term);
    for (const auto& ts : scores) {
      auto& pl = index.postings[ts.term_id];
      pl.term_id = ts.term_id;
      pl.entries.push_back(Posting{static_cast<std::uint32_t>(d), static_cast<float>(ts.combined)});
    }
  }
  for (auto& [tid, pl] : index.postings) sort_by_impact(pl);
  return index;
}

// ---------------------------------------------------------------------------
// query-time retrieval

struct RetrievedDoc {
  std::uint32_t doc = 0;
  double score = 0.0;
};

// Document-at-a-time accumulation over the query terms' posting lists with
// a size-k heap. Duplicate query terms contribute once per occurrence;
// ties break by ascending internal doc id.
inline std::vector<RetrievedDoc> retrieve_topk(const TokenSequence& query, const ImpactIndex& index,
                                               std::size_t k) {
  if (k < 1) throw std::invalid_argument("retrieve_topk: k must be >= 1");
  std::map<int, int> multiplicity;
  for (int id : query.ids)
    if (id != kPadId && id != kOovId) multiplicity[id] += 1;

  // docid-ordered cursor per involved posting list
  struct Cursor {
    std::vector<Posting> by_doc;
    std::size_t pos = 0;
    int mult = 1;
  };
  std::vector<Cursor> cursors;
  for (const auto& [tid, mult] : multiplicity) {
    const PostingList* pl = index.find(tid);
    if (!pl) continue;
    Cursor c;
    c.by_doc = pl->entries;
    std::sort(c.by_doc.begin(), c.by_doc.end(),
              [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
    c.mult = mult;
    cursors.push_back(std::move(c));
  }
  if (cursors.empty()) return {};

  // worst candidate on top: lower score first, then larger doc id
  auto worse = [](const RetrievedDoc& a, const RetrievedDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc < b.doc;
  };
  std::priority_queue<RetrievedDoc, std::vector<RetrievedDoc>, decltype(worse)> heap(worse);

  while (true) {
    std::uint32_t next_doc = UINT32_MAX;
    for (const auto& c : cursors)
      if (c.pos < c.by_doc.size()) next_doc = std::min(next_doc, c.by_doc[c.pos].doc);
    if (next_doc == UINT32_MAX) break;
    double score = 0.0;
    for (auto& c : cursors) {
      if (c.pos < c.by_doc.size() && c.by_doc[c.pos].doc == next_doc) {
        score += static_cast<double>(c.by_doc[c.pos].impact) * c.mult;
        c.pos += 1;
      }
    }
    heap.push(RetrievedDoc{next_doc, score});
    if (heap.size() > k) heap.pop();
  }

  std::vector<RetrievedDoc> out;
  out.reserve(heap.size());
  while (!heap.empty()) {
    out.push_back(heap.top());
    heap.pop();
  }
  std::sort(out.begin(), out.end(), [](const RetrievedDoc& a, const RetrievedDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc < b.doc;
  });
  return out;
}

// ---------------------------------------------------------------------------
// exhaustive oracle

// Scores a query against every document directly through the model, with
// the same occurrence gating the index applies: a per-term score counts
// only where the (in-vocabulary) term occurs in the document. Documents
// sharing no query term never appear. Document encodings are computed
// once and reused across queries.
class ExhaustiveScorer {
 public:
  ExhaustiveScorer(const CkModel& model, const Vocabulary& vocab, const DocumentStore& store)
      : model_(model), vocab_(vocab), store_(store), view_(model.view()) {
    if (!model.norm.initialized())
      throw DataError("exhaustive_score: uninitialized normalization statistics");
    EncodeMode mode;
    encodings_.reserve(store.size());
    masks_.reserve(store.size());
    for (std::size_t d = 0; d < store.size(); ++d) {
      TokenSequence seq = to_ids(store.doc(d).tokens, vocab, model.cfg.doc_max_len);
      masks_.push_back(padding_mask(seq.ids));
      encodings_.push_back(encode_document(seq, view_.encoder, model.cfg, mode));
    }
  }

  // Full gated ranking: descending score, ties by ascending doc index.
  std::vector<RetrievedDoc> rank(const std::vector<std::pair<int, std::string>>& query_terms) const {
    const std::uint64_t n_docs = store_.size();
    std::vector<RetrievedDoc> out;
    for (std::size_t d = 0; d < store_.size(); ++d) {
      const Document& doc = store_.doc(d);
      std::vector<int> ids;
      std::vector<TermStats> stats;
      std::vector<int> mults;
      std::map<int, int> seen;  // term id -> index into ids
      for (const auto& [id, term] : query_terms) {
        if (id == kPadId || id == kOovId) continue;
        if (doc.tf(term) < 1) continue;
        auto it = seen.find(id);
        if (it != seen.end()) {
          mults[static_cast<std::size_t>(it->second)] += 1;
          continue;
        }
        seen[id] = static_cast<int>(ids.size());
        ids.push_back(id);
        TermStats ts;
        ts.idf = idf_value(n_docs, vocab_.df(term));
        ts.tf = static_cast<double>(doc.tf(term));
        ts.dlen = static_cast<double>(doc.length());
        stats.push_back(ts);
        mults.push_back(1);
      }
      if (ids.empty()) continue;
      std::size_t cursor = 0;
      auto stats_for_term = [&](int) { return stats[cursor++]; };
      auto scores = score_terms_infer(ids, encodings_[d], masks_[d], view_, model_.bank,
                                      model_.cfg, model_.norm, stats_for_term);
      double s = 0.0;
      for (std::size_t i = 0; i < scores.size(); ++i) s += scores[i].combined * mults[i];
      out.push_back(RetrievedDoc{static_cast<std::uint32_t>(d), s});
    }
    std::sort(out.begin(), out.end(), [](const RetrievedDoc& a, const RetrievedDoc& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.doc < b.doc;
    });
    return out;
  }

 private:
  const CkModel& model_;
  const Vocabulary& vocab_;
  const DocumentStore& store_;
  ModelView view_;
  std::vector<Tensor> encodings_;
  std::vector<std::vector<double>> masks_;
};

// ---------------------------------------------------------------------------
// binary index format: magic "CKIDX1", little-endian

inline std::string serialize_index(const ImpactIndex& index) {
  ByteWriter w;
  w.magic("CKIDX1");
  w.u64(index.doc_count);
  w.u64(index.vocab_hash);
  w.u64(index.checkpoint_hash);
  w.u64(index.postings.size());
  for (const auto& name : index.doc_names) w.str(name);
  w.str(index.build_config);
  w.f64(index.avg_doc_length);
  for (const auto& [tid, pl] : index.postings) {
    w.u32(static_cast<std::uint32_t>(tid));
    w.u64(pl.entries.size());
    for (const Posting& p : pl.entries) {
      w.u32(p.doc);
      w.f32(p.impact);
    }
  }
  return w.bytes();
}

inline void save_index(const std::string& path, const ImpactIndex& index) {
  write_text_file(path, serialize_index(index));
}

// Loads and validates an index. When expected hashes are given, a mismatch
// is fatal: impacts are only meaningful with the checkpoint/vocabulary
// that produced them.
inline ImpactIndex load_index(const std::string& path,
                              std::optional<std::uint64_t> expect_checkpoint_hash = {},
                              std::optional<std::uint64_t> expect_vocab_hash = {}) {
  ByteReader r = ByteReader::from_file(path);
  r.expect_magic("CKIDX1", "impact index");
  ImpactIndex index;
  index.doc_count = r.u64();
  index.vocab_hash = r.u64();
  index.checkpoint_hash = r.u64();
  const std::uint64_t term_count = r.u64();
  for (std::uint64_t i = 0; i < index.doc_count; ++i) index.doc_names.push_back(r.str());
  index.build_config = r.str();
  index.avg_doc_length = r.f64();
  for (std::uint64_t i = 0; i < term_count; ++i) {
    PostingList pl;
    pl.term_id = static_cast<int>(r.u32());
    const std::uint64_t n = r.u64();
    pl.entries.reserve(n);
    for (std::uint64_t j = 0; j < n; ++j) {
      Posting p;
      p.doc = r.u32();
      p.impact = r.f32();
      pl.entries.push_back(p);
    }
    index.postings[pl.term_id] = std::move(pl);
  }
  if (!r.at_end()) throw DataError("trailing bytes after index payload: " + path);
  if (expect_checkpoint_hash && *expect_checkpoint_hash != index.checkpoint_hash)
    throw DataError("index " + path + " was built from a different checkpoint (hash mismatch)");
  if (expect_vocab_hash && *expect_vocab_hash != index.vocab_hash)
    throw DataError("index " + path + " was built from a different vocabulary (hash mismatch)");
  return index;
}

}  // namespace ck
