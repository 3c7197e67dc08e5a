#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

namespace ck {

// Raised when a probe's element budget would be exceeded. The memory
// benchmark treats this as the CPU analogue of running out of accelerator
// memory: it records a sentinel for that sequence length and continues.
struct MemoryBudgetExceeded : std::runtime_error {
  explicit MemoryBudgetExceeded(const std::string& msg) : std::runtime_error(msg) {}
};

// Counts live tensor elements, independent of float width. Only storage
// allocated while the probe is installed is tracked; per-label breakdowns
// are keyed by the label active at allocation time. Labels sharing the
// group prefix (default "attn") are additionally tracked jointly so the
// benchmark can report attention-only peaks.
class AllocationProbe {
 public:
  struct LabelStat {
    std::int64_t current = 0;
    std::int64_t peak = 0;
  };

  explicit AllocationProbe(std::int64_t element_budget = 0, std::string group_prefix = "attn")
      : budget_(element_budget), group_prefix_(std::move(group_prefix)) {}

  void on_alloc(std::int64_t n, const std::string& label) {
    if (budget_ > 0 && current_ + n > budget_) {
      throw MemoryBudgetExceeded("allocation probe budget exceeded: " +
                                 std::to_string(current_ + n) + " > " +
                                 std::to_string(budget_) + " elements");
    }
    current_ += n;
    peak_ = std::max(peak_, current_);
    if (!label.empty()) {
      auto& st = labels_[label];
      st.current += n;
      st.peak = std::max(st.peak, st.current);
      if (in_group(label)) {
        group_current_ += n;
        group_peak_ = std::max(group_peak_, group_current_);
      }
    }
  }

  void on_free(std::int64_t n, const std::string& label) {
    current_ -= n;
    if (!label.empty()) {
      auto it = labels_.find(label);
      if (it != labels_.end()) it->second.current -= n;
      if (in_group(label)) group_current_ -= n;
    }
  }

  std::int64_t current() const { return current_; }
  std::int64_t peak() const { return peak_; }
  std::int64_t group_current() const { return group_current_; }
  std::int64_t group_peak() const { return group_peak_; }

  std::int64_t label_peak(const std::string& label) const {
    auto it = labels_.find(label);
    return it == labels_.end() ? 0 : it->second.peak;
  }
  std::int64_t label_current(const std::string& label) const {
    auto it = labels_.find(label);
    return it == labels_.end() ? 0 : it->second.current;
  }
  const std::map<std::string, LabelStat>& labels() const { return labels_; }

  void reset() {
    current_ = peak_ = 0;
    group_current_ = group_peak_ = 0;
    labels_.clear();
  }

 private:
  bool in_group(const std::string& label) const {
    return label.compare(0, group_prefix_.size(), group_prefix_) == 0;
  }

  std::int64_t current_ = 0;
  std::int64_t peak_ = 0;
  std::int64_t group_current_ = 0;
  std::int64_t group_peak_ = 0;
  std::int64_t budget_ = 0;
  std::string group_prefix_;
  std::map<std::string, LabelStat> labels_;
};

namespace detail {
inline AllocationProbe*& tls_probe() {
  thread_local AllocationProbe* p = nullptr;
  return p;
}
inline std::string& tls_label() {
  thread_local std::string l;
  return l;
}
}  // namespace detail

// Installs a probe for the current thread for the lifetime of the scope.
// The probe object must outlive every tensor allocated under it.
class ProbeScope {
 public:
  explicit ProbeScope(AllocationProbe& probe) : prev_(detail::tls_probe()) {
    detail::tls_probe() = &probe;
  }
  ~ProbeScope() { detail::tls_probe() = prev_; }
  ProbeScope(const ProbeScope&) = delete;
  ProbeScope& operator=(const ProbeScope&) = delete;

 private:
  AllocationProbe* prev_;
};

// Tags allocations made inside the scope with a label.
class ProbeLabel {
 public:
  explicit ProbeLabel(std::string label) : prev_(detail::tls_label()) {
    detail::tls_label() = std::move(label);
  }
  ~ProbeLabel() { detail::tls_label() = std::move(prev_); }
  ProbeLabel(const ProbeLabel&) = delete;
  ProbeLabel& operator=(const ProbeLabel&) = delete;

 private:
  std::string prev_;
};

}  // namespace ck
