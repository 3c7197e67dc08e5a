#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ck/io.hpp"
#include "ck/text.hpp"

namespace ck {

// One ingested document: external id plus tokenized text. Term counts are
// kept sorted by term for deterministic iteration. The ORCAS-style extra
// field, when present, is appended to the body after its own length cap.
struct Document {
  std::string docid;
  std::vector<std::string> tokens;                       // full text, pre-truncation
  std::vector<std::pair<std::string, int>> term_counts;  // sorted by term
  int length() const { return static_cast<int>(tokens.size()); }

  int tf(const std::string& term) const {
    auto it = std::lower_bound(term_counts.begin(), term_counts.end(), term,
                               [](const auto& p, const std::string& t) { return p.first < t; });
    return it != term_counts.end() && it->first == term ? it->second : 0;
  }
};

struct IngestReport {
  std::uint64_t parsed = 0;
  std::uint64_t skipped = 0;
  std::vector<std::string> skip_reasons;  // capped sample for logs
};

// Random-access in-memory document store over a corpus TSV.
class DocumentStore {
 public:
  std::size_t size() const { return docs_.size(); }
  const Document& doc(std::size_t i) const { return docs_.at(i); }

  bool has(const std::string& docid) const { return by_id_.count(docid) > 0; }
  std::size_t index_of(const std::string& docid) const {
    auto it = by_id_.find(docid);
    if (it == by_id_.end()) throw DataError("unknown document id: " + docid);
    return it->second;
  }

  std::size_t add(Document d) {
    if (by_id_.count(d.docid)) throw DataError("duplicate document id: " + d.docid);
    by_id_[d.docid] = docs_.size();
    docs_.push_back(std::move(d));
    return docs_.size() - 1;
  }

  const IngestReport& report() const { return report_; }
  IngestReport& report() { return report_; }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> by_id_;
  IngestReport report_;
};

namespace detail {
inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}
}  // namespace detail

// Streams a corpus TSV (docid, url, title, body[, extra]) into a store.
// Malformed lines are skipped and counted; duplicate docids are fatal.
// The URL column is metadata only and contributes no tokens.
inline DocumentStore ingest_corpus(const std::string& path, int extra_field_max_len) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus: " + path);
  DocumentStore store;
  std::string line;
  std::uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_tabs(line);
    auto skip = [&](const std::string& why) {
      store.report().skipped += 1;
      if (store.report().skip_reasons.size() < 32)
        store.report().skip_reasons.push_back("line " + std::to_string(lineno) + ": " + why);
    };
    if (fields.size() < 4) {
      skip("expected at least 4 tab-separated fields, got " + std::to_string(fields.size()));
      continue;
    }
    const std::string& docid = fields[0];
    if (docid.empty()) {
      skip("empty docid");
      continue;
    }
    Document d;
    d.docid = docid;
    d.tokens = tokenize(fields[2]);  // title
    auto body = tokenize(fields[3]);
    d.tokens.insert(d.tokens.end(), body.begin(), body.end());
    if (fields.size() >= 5) {
      auto extra = tokenize(fields[4]);
      if (static_cast<int>(extra.size()) > extra_field_max_len)
        extra.resize(static_cast<std::size_t>(extra_field_max_len));
      d.tokens.insert(d.tokens.end(), extra.begin(), extra.end());
    }
    if (d.tokens.empty()) {
      skip("document has no tokens");
      continue;
    }
    std::unordered_map<std::string, int> counts;
    for (const auto& t : d.tokens) counts[t] += 1;
    d.term_counts.assign(counts.begin(), counts.end());
    std::sort(d.term_counts.begin(), d.term_counts.end());
    store.add(std::move(d));  // throws on duplicate docid
    store.report().parsed += 1;
  }
  if (store.size() == 0) throw DataError("corpus is empty: " + path);
  return store;
}

// Corpus-level statistics backing the explicit matcher: N, df_t, |d|, TF.
class CollectionStats {
 public:
  CollectionStats() = default;
  explicit CollectionStats(const DocumentStore& store) : store_(&store) {}

  std::uint64_t doc_count() const { return store_->size(); }
  int doc_length(std::size_t doc_index) const { return store_->doc(doc_index).length(); }
  int tf(const std::string& term, std::size_t doc_index) const {
    return store_->doc(doc_index).tf(term);
  }
  double avg_doc_length() const {
    double s = 0;
    for (std::size_t i = 0; i < store_->size(); ++i) s += store_->doc(i).length();
    return store_->size() ? s / static_cast<double>(store_->size()) : 0.0;
  }

 private:
  const DocumentStore* store_ = nullptr;
};

inline Vocabulary build_vocab(const DocumentStore& store, int min_df) {
  if (store.size() == 0) throw DataError("build_vocab: empty corpus");
  std::vector<std::vector<std::string>> distinct;
  distinct.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    std::vector<std::string> terms;
    terms.reserve(store.doc(i).term_counts.size());
    for (const auto& [t, c] : store.doc(i).term_counts) terms.push_back(t);
    distinct.push_back(std::move(terms));
  }
  return Vocabulary::build(distinct, store.size(), min_df);
}

// Queries TSV: `qid<TAB>query text`.
struct Query {
  std::string qid;
  std::string text;
};

inline std::vector<Query> load_queries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open queries: " + path);
  std::vector<Query> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("queries file " + path + ": expected qid<TAB>text");
    out.push_back(Query{line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

}  // namespace ck
