#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ck/io.hpp"

namespace ck {

// All model and training hyperparameters. A flat `key = value` text file
// overrides the defaults; unknown keys are rejected.
struct Config {
  // text handling
  int query_max_len = 20;
  int doc_max_len = 4000;
  int extra_field_max_len = 2000;
  int min_df = 2;

  // model
  int embedding_dim = 256;
  int layers = 2;
  int heads = 32;
  int conv_window = 31;
  int conv_groups = 32;
  int kernels = 10;
  int pool_window = 300;
  int pool_stride = 100;
  int pool_top_windows = 3;
  double dropout = 0.2;

  // training
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 16;
  int micro_batch = 4;
  int steps = 400;
  int warmup_batches = 8;
  int checkpoint_every = 200;
  std::uint64_t seed = 7;
  std::string embeddings_file;  // optional external word vectors

  int head_dim() const { return embedding_dim / heads; }

  void validate() const {
    auto fail = [](const std::string& msg) { throw DataError("config: " + msg); };
    if (embedding_dim < 1) fail("embedding_dim must be positive");
    if (heads < 1 || embedding_dim % heads != 0) fail("embedding_dim must be divisible by heads");
    if (conv_groups < 1 || embedding_dim % conv_groups != 0)
      fail("embedding_dim must be divisible by conv_groups");
    if (conv_window < 1 || conv_window % 2 == 0) fail("conv_window must be odd");
    if (layers < 0) fail("layers must be >= 0");
    if (kernels < 2) fail("kernels must be >= 2");
    if (pool_stride < 1 || pool_window < pool_stride) fail("pool_window >= pool_stride >= 1 required");
    if (pool_top_windows < 1) fail("pool_top_windows must be >= 1");
    if (dropout < 0 || dropout >= 1) fail("dropout must be in [0, 1)");
    if (query_max_len < 1 || doc_max_len < 1) fail("length caps must be >= 1");
    if (min_df < 1) fail("min_df must be >= 1");
    if (batch_size < 1 || micro_batch < 1) fail("batch sizes must be >= 1");
    if (steps < 0 || warmup_batches < 0) fail("steps/warmup_batches must be >= 0");
  }

  template <typename Fn>
  void for_each_key(Fn&& fn) {
    fn("query_max_len", &query_max_len);
    fn("doc_max_len", &doc_max_len);
    fn("extra_field_max_len", &extra_field_max_len);
    fn("min_df", &min_df);
    fn("embedding_dim", &embedding_dim);
    fn("layers", &layers);
    fn("heads", &heads);
    fn("conv_window", &conv_window);
    fn("conv_groups", &conv_groups);
    fn("kernels", &kernels);
    fn("pool_window", &pool_window);
    fn("pool_stride", &pool_stride);
    fn("pool_top_windows", &pool_top_windows);
    fn("batch_size", &batch_size);
    fn("micro_batch", &micro_batch);
    fn("steps", &steps);
    fn("warmup_batches", &warmup_batches);
    fn("checkpoint_every", &checkpoint_every);
  }

  std::string serialize() const {
    std::ostringstream os;
    os.precision(17);
    Config copy = *this;
    copy.for_each_key([&](const char* key, int* value) { os << key << " = " << *value << "\n"; });
    os << "dropout = " << dropout << "\n";
    os << "lr = " << lr << "\n";
    os << "adam_beta1 = " << adam_beta1 << "\n";
    os << "adam_beta2 = " << adam_beta2 << "\n";
    os << "adam_eps = " << adam_eps << "\n";
    os << "seed = " << seed << "\n";
    if (!embeddings_file.empty()) os << "embeddings_file = " << embeddings_file << "\n";
    return os.str();
  }

  static Config parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const char* ws = " \t\r\n";
        auto b = s.find_first_not_of(ws);
        if (b == std::string::npos) return std::string();
        auto e = s.find_last_not_of(ws);
        return s.substr(b, e - b + 1);
      };
      std::string t = trim(line);
      if (t.empty()) continue;
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw DataError("config line " + std::to_string(lineno) + ": expected `key = value`");
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (!c.apply(key, value))
        throw DataError("config line " + std::to_string(lineno) + ": unknown key `" + key + "`");
    }
    c.validate();
    return c;
  }

  static Config load(const std::string& path) { return parse(read_text_file(path)); }

 private:
  bool apply(const std::string& key, const std::string& value) {
    bool found = false;
    for_each_key([&](const char* k, int* slot) {
      if (!found && key == k) {
        *slot = std::stoi(value);
        found = true;
      }
    });
    if (found) return true;
    auto as_double = [&](double* slot) { *slot = std::stod(value); return true; };
    if (key == "dropout") return as_double(&dropout);
    if (key == "lr") return as_double(&lr);
    if (key == "adam_beta1") return as_double(&adam_beta1);
    if (key == "adam_beta2") return as_double(&adam_beta2);
    if (key == "adam_eps") return as_double(&adam_eps);
    if (key == "seed") {
      seed = std::stoull(value);
      return true;
    }
    if (key == "embeddings_file") {
      embeddings_file = value;
      return true;
    }
    return false;
  }
};

}  // namespace ck
