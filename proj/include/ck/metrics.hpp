#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ck/trec.hpp"

namespace ck {

struct QueryMetrics {
  std::string qid;
  double rr = 0.0;
  double ndcg = 0.0;
  double ncg = 0.0;
  bool ndcg_included = true;  // false when the ideal DCG is zero
  bool ncg_included = true;
};

struct MetricReport {
  std::vector<QueryMetrics> per_query;
  double mean_mrr = 0.0;
  double mean_ndcg = 0.0;
  double mean_ncg = 0.0;
  std::size_t mrr_count = 0;
  std::size_t ndcg_count = 0;
  std::size_t ncg_count = 0;
  int mrr_cutoff = 100;
  int ndcg_k = 10;
  int ncg_k = 100;
  std::vector<std::string> notes;
};

inline double mrr_for_query(const std::vector<RunEntry>& entries, const QrelSet& qrels,
                            const std::string& qid, int cutoff) {
  int rank = 0;
  for (const auto& e : entries) {
    ++rank;
    if (rank > cutoff) break;
    if (qrels.relevance(qid, e.docid) >= 1) return 1.0 / rank;
  }
  return 0.0;
}

inline double dcg_gain(int rel) { return std::pow(2.0, rel) - 1.0; }

// Returns {ndcg, included}; excluded when the query has zero ideal DCG.
inline std::pair<double, bool> ndcg_for_query(const std::vector<RunEntry>& entries,
                                              const QrelSet& qrels, const std::string& qid, int k) {
  std::vector<int> ideal;
  if (qrels.has_query(qid))
    for (const auto& [docid, rel] : qrels.by_query().at(qid))
      if (rel > 0) ideal.push_back(rel);
  std::sort(ideal.begin(), ideal.end(), std::greater<int>());
  double idcg = 0.0;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(ideal.size())); ++i)
    idcg += dcg_gain(ideal[static_cast<std::size_t>(i)]) / std::log2(i + 2.0);
  if (idcg == 0.0) return {0.0, false};
  double dcg = 0.0;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(entries.size())); ++i)
    dcg += dcg_gain(qrels.relevance(qid, entries[static_cast<std::size_t>(i)].docid)) /
           std::log2(i + 2.0);
  return {dcg / idcg, true};
}

// Rank-unaware gain recall at k.
inline std::pair<double, bool> ncg_for_query(const std::vector<RunEntry>& entries,
                                             const QrelSet& qrels, const std::string& qid, int k) {
  std::vector<int> ideal;
  if (qrels.has_query(qid))
    for (const auto& [docid, rel] : qrels.by_query().at(qid))
      if (rel > 0) ideal.push_back(rel);
  std::sort(ideal.begin(), ideal.end(), std::greater<int>());
  double ideal_gain = 0.0;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(ideal.size())); ++i)
    ideal_gain += ideal[static_cast<std::size_t>(i)];
  if (ideal_gain == 0.0) return {0.0, false};
  double gain = 0.0;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(entries.size())); ++i)
    gain += qrels.relevance(qid, entries[static_cast<std::size_t>(i)].docid);
  return {gain / ideal_gain, true};
}

// Evaluates a run against qrels over the union of both query sets: a run
// query without judgments counts as 0 (and is noted); a judged query with
// no results counts as 0 for every metric it is included in.
inline MetricReport evaluate_run(const RunFile& run, const QrelSet& qrels, int mrr_cutoff = 100,
                                 int ndcg_k = 10, int ncg_k = 100) {
  MetricReport rep;
  rep.mrr_cutoff = mrr_cutoff;
  rep.ndcg_k = ndcg_k;
  rep.ncg_k = ncg_k;
  std::set<std::string> universe;
  for (const auto& [qid, entries] : run) universe.insert(qid);
  for (const auto& [qid, judged] : qrels.by_query()) universe.insert(qid);
  static const std::vector<RunEntry> kNoEntries;
  for (const auto& qid : universe) {
    auto rit = run.find(qid);
    const auto& entries = rit == run.end() ? kNoEntries : rit->second;
    if (!qrels.has_query(qid))
      rep.notes.push_back("query " + qid + " has results but no judgments; counted as 0");
    QueryMetrics qm;
    qm.qid = qid;
    qm.rr = mrr_for_query(entries, qrels, qid, mrr_cutoff);
    auto [ndcg, ndcg_inc] = ndcg_for_query(entries, qrels, qid, ndcg_k);
    auto [ncg, ncg_inc] = ncg_for_query(entries, qrels, qid, ncg_k);
    qm.ndcg = ndcg;
    qm.ndcg_included = ndcg_inc;
    qm.ncg = ncg;
    qm.ncg_included = ncg_inc;
    if (!ndcg_inc) rep.notes.push_back("query " + qid + " has zero ideal gain; excluded from NDCG/NCG");
    rep.per_query.push_back(qm);
    rep.mean_mrr += qm.rr;
    rep.mrr_count += 1;
    if (ndcg_inc) {
      rep.mean_ndcg += qm.ndcg;
      rep.ndcg_count += 1;
    }
    if (ncg_inc) {
      rep.mean_ncg += qm.ncg;
      rep.ncg_count += 1;
    }
  }
  if (rep.mrr_count) rep.mean_mrr /= static_cast<double>(rep.mrr_count);
  if (rep.ndcg_count) rep.mean_ndcg /= static_cast<double>(rep.ndcg_count);
  if (rep.ncg_count) rep.mean_ncg /= static_cast<double>(rep.ncg_count);
  return rep;
}

}  // namespace ck
