#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ck/io.hpp"
#include "ck/nn.hpp"
#include "ck/random.hpp"
#include "ck/tensor.hpp"

namespace ck {

constexpr int kPadId = 0;
constexpr int kOovId = 1;
constexpr int kFirstTermId = 2;

// Lowercases and splits on any non-alphanumeric codepoint. Bytes outside
// ASCII are treated as word characters and kept verbatim.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
      cur.push_back(static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Closed vocabulary over terms meeting the document-frequency threshold.
// Ids are dense: 0 = padding, 1 = out-of-vocabulary, real terms from 2 in
// lexicographic order so they are stable across rebuilds and save/load.
class Vocabulary {
 public:
  Vocabulary() = default;

  // `doc_terms` yields each document's distinct terms exactly once.
  static Vocabulary build(const std::vector<std::vector<std::string>>& docs_distinct_terms,
                          std::uint64_t total_docs, int min_df) {
    if (total_docs == 0) throw DataError("build_vocab: empty corpus");
    std::map<std::string, std::uint64_t> df;
    for (const auto& terms : docs_distinct_terms)
      for (const auto& t : terms) df[t] += 1;
    Vocabulary v;
    v.total_docs_ = total_docs;
    for (const auto& [term, d] : df) {
      if (d < static_cast<std::uint64_t>(min_df)) continue;
      v.ids_[term] = kFirstTermId + static_cast<int>(v.terms_.size());
      v.terms_.push_back(term);
      v.dfs_.push_back(d);
    }
    return v;
  }

  int id(const std::string& term) const {
    auto it = ids_.find(term);
    return it == ids_.end() ? kOovId : it->second;
  }
  bool contains(const std::string& term) const { return ids_.count(term) > 0; }

  const std::string& term(int id) const {
    if (id < kFirstTermId || id >= size()) throw std::out_of_range("vocabulary: bad term id");
    return terms_[static_cast<std::size_t>(id - kFirstTermId)];
  }

  // Document frequency; 0 for terms below the threshold or never seen.
  std::uint64_t df(const std::string& term) const {
    auto it = ids_.find(term);
    return it == ids_.end() ? 0 : dfs_[static_cast<std::size_t>(it->second - kFirstTermId)];
  }
  std::uint64_t df_by_id(int id) const {
    if (id < kFirstTermId || id >= size()) return 0;
    return dfs_[static_cast<std::size_t>(id - kFirstTermId)];
  }

  std::uint64_t total_docs() const { return total_docs_; }
  int size() const { return kFirstTermId + static_cast<int>(terms_.size()); }  // table rows incl. pad/oov
  int term_count() const { return static_cast<int>(terms_.size()); }

  std::string serialize() const {
    std::ostringstream os;
    os << "CKVOCAB1\t" << total_docs_ << '\t' << terms_.size() << '\n';
    for (std::size_t i = 0; i < terms_.size(); ++i)
      os << terms_[i] << '\t' << (kFirstTermId + i) << '\t' << dfs_[i] << '\n';
    return os.str();
  }

  static Vocabulary deserialize(const std::string& text, const std::string& origin = "<memory>") {
    std::istringstream in(text);
    std::string header;
    if (!std::getline(in, header)) throw DataError("vocabulary file empty: " + origin);
    std::istringstream hs(header);
    std::string magic;
    std::uint64_t total = 0, count = 0;
    hs >> magic >> total >> count;
    if (magic != "CKVOCAB1") throw DataError("not a vocabulary file: " + origin);
    Vocabulary v;
    v.total_docs_ = total;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto t1 = line.find('\t');
      auto t2 = line.find('\t', t1 + 1);
      if (t1 == std::string::npos || t2 == std::string::npos)
        throw DataError("malformed vocabulary line in " + origin);
      std::string term = line.substr(0, t1);
      int id = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
      std::uint64_t d = std::stoull(line.substr(t2 + 1));
      if (id != kFirstTermId + static_cast<int>(v.terms_.size()))
        throw DataError("non-dense term ids in " + origin);
      v.ids_[term] = id;
      v.terms_.push_back(std::move(term));
      v.dfs_.push_back(d);
    }
    if (v.terms_.size() != count) throw DataError("vocabulary count mismatch in " + origin);
    return v;
  }

  void save(const std::string& path) const { write_text_file(path, serialize()); }
  static Vocabulary load(const std::string& path) {
    return deserialize(read_text_file(path), path);
  }

  std::uint64_t hash() const { return fnv1a64(serialize()); }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> terms_;  // index i <-> id i + kFirstTermId
  std::vector<std::uint64_t> dfs_;
  std::uint64_t total_docs_ = 0;
};

// Term-id sequence after vocabulary mapping and truncation.
struct TokenSequence {
  std::vector<int> ids;
  std::size_t original_length = 0;  // token count before truncation
};

inline TokenSequence to_ids(const std::vector<std::string>& terms, const Vocabulary& vocab,
                            std::size_t max_len) {
  TokenSequence seq;
  seq.original_length = terms.size();
  const std::size_t n = std::min(terms.size(), max_len);
  seq.ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) seq.ids.push_back(vocab.id(terms[i]));
  return seq;
}

// |vocab| x dim lookup table. Row 0 (padding) is pinned to zero; all other
// rows start uniform in +-1/sqrt(dim).
inline Tensor init_embedding_table(int vocab_rows, int dim, Rng& rng) {
  Tensor t = Tensor::zeros({vocab_rows, dim});
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int r = kOovId; r < vocab_rows; ++r)
    for (int c = 0; c < dim; ++c)
      t.mut()[static_cast<std::size_t>(r) * dim + c] = rng_uniform(rng, -bound, bound);
  return t;
}

// Optional hook for externally trained word vectors: lines of
// `term v1 v2 ... vdim`. Terms absent from the vocabulary are skipped;
// returns the number of rows overwritten.
inline int load_external_vectors(Tensor& table, const Vocabulary& vocab, const std::string& path) {
  std::istringstream in(read_text_file(path));
  const int dim = table.cols();
  std::string line;
  int loaded = 0;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string term;
    ls >> term;
    if (!vocab.contains(term)) continue;
    const int id = vocab.id(term);
    for (int c = 0; c < dim; ++c) {
      double v;
      if (!(ls >> v))
        throw DataError("embeddings file " + path + " line " + std::to_string(lineno) +
                        ": expected " + std::to_string(dim) + " values");
      table.mut()[static_cast<std::size_t>(id) * dim + c] = v;
    }
    ++loaded;
  }
  return loaded;
}

inline Tensor embed(const TokenSequence& seq, const Tensor& table) {
  return embedding_rows(table, seq.ids);
}

}  // namespace ck
