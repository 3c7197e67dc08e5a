#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ck/io.hpp"

namespace ck {

// One line of a TREC run file: `qid Q0 docid rank score runtag`.
struct RunEntry {
  std::string qid;
  std::string docid;
  int rank = 0;
  double score = 0.0;
};

// Entries per query, sorted by rank. std::map keeps qid order stable for
// deterministic output.
using RunFile = std::map<std::string, std::vector<RunEntry>>;

inline RunFile load_run(const std::string& path) {
  std::istringstream in(read_text_file(path));
  RunFile run;
  std::string line;
  std::uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    RunEntry e;
    std::string q0, tag;
    if (!(ls >> e.qid >> q0 >> e.docid >> e.rank >> e.score >> tag))
      throw DataError("run file " + path + " line " + std::to_string(lineno) +
                      ": expected `qid Q0 docid rank score runtag`");
    run[e.qid].push_back(std::move(e));
  }
  for (auto& [qid, entries] : run)
    std::sort(entries.begin(), entries.end(),
              [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
  return run;
}

inline std::string format_run(const RunFile& run, const std::string& tag) {
  std::ostringstream os;
  char buf[64];
  for (const auto& [qid, entries] : run)
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof(buf), "%.6f", e.score);
      os << qid << " Q0 " << e.docid << ' ' << e.rank << ' ' << buf << ' ' << tag << '\n';
    }
  return os.str();
}

inline void write_run(const std::string& path, const RunFile& run, const std::string& tag) {
  write_text_file(path, format_run(run, tag));
}

// Checks the 6-field shape of a run file; returns an empty string when the
// format is valid, otherwise a description of the first violation.
inline std::string check_run_format(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  std::uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string f;
    while (ls >> f) fields.push_back(f);
    auto fail = [&](const std::string& why) {
      return "line " + std::to_string(lineno) + ": " + why;
    };
    if (fields.size() != 6) return fail("expected 6 space-separated fields, got " + std::to_string(fields.size()));
    if (fields[1] != "Q0") return fail("second field must be Q0");
    try {
      if (std::stoi(fields[3]) < 1) return fail("rank must be >= 1");
      std::stod(fields[4]);
    } catch (const std::exception&) {
      return fail("rank/score fields must be numeric");
    }
  }
  return std::string();
}

// Graded relevance judgments: `qid 0 docid rel`, whitespace-separated.
// Unlisted pairs are relevance 0.
class QrelSet {
 public:
  void add(const std::string& qid, const std::string& docid, int rel) {
    rels_[qid][docid] = rel;
  }

  int relevance(const std::string& qid, const std::string& docid) const {
    auto it = rels_.find(qid);
    if (it == rels_.end()) return 0;
    auto jt = it->second.find(docid);
    return jt == it->second.end() ? 0 : jt->second;
  }

  bool has_query(const std::string& qid) const { return rels_.count(qid) > 0; }

  const std::map<std::string, std::unordered_map<std::string, int>>& by_query() const {
    return rels_;
  }

  static QrelSet load(const std::string& path) {
    std::istringstream in(read_text_file(path));
    QrelSet q;
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string qid, zero, docid;
      int rel;
      if (!(ls >> qid >> zero >> docid >> rel))
        throw DataError("qrels file " + path + " line " + std::to_string(lineno) +
                        ": expected `qid 0 docid rel`");
      if (rel < 0) throw DataError("qrels file " + path + ": negative relevance");
      q.add(qid, docid, rel);
    }
    return q;
  }

 private:
  std::map<std::string, std::unordered_map<std::string, int>> rels_;
};

}  // namespace ck
