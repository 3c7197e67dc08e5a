#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ck {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts are unsupported");

// Data-level failures (bad files, format mismatches). The CLI maps these to
// exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  void magic(const char (&m)[7]) { raw(m, 6); }

  const std::string& bytes() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw DataError("write failed: " + path);
  }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string bytes, std::string origin = "<memory>")
      : buf_(std::move(bytes)), origin_(std::move(origin)) {}

  static ByteReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ByteReader(ss.str(), path);
  }

  void raw(void* p, std::size_t n) {
    if (pos_ + n > buf_.size())
      throw DataError("truncated file: " + origin_ + " (needed " + std::to_string(n) +
                      " bytes at offset " + std::to_string(pos_) + ")");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
  float f32() { float v; raw(&v, 4); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  std::string str() {
    std::uint32_t n = u32();
    if (pos_ + n > buf_.size()) throw DataError("truncated file: " + origin_);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> f64s() {
    std::uint64_t n = u64();
    if (pos_ + n * sizeof(double) > buf_.size()) throw DataError("truncated file: " + origin_);
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
  void expect_magic(const char (&m)[7], const std::string& kind) {
    char got[6];
    raw(got, 6);
    if (std::memcmp(got, m, 6) != 0)
      throw DataError("bad magic in " + origin_ + ": not a " + kind + " file");
  }
  bool at_end() const { return pos_ == buf_.size(); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << content;
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace ck
