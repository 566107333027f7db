#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "freewalk/measures.hpp"

namespace freewalk::tools {

struct CacheStats {
  int hits = 0;
  int misses = 0;
  int corrupt = 0;  // checksum or header mismatch; entry removed and recomputed
  int writes = 0;
};

// Content-addressed store of heavy intermediates. Each entry is one file holding a header, the
// payload and its SHA-256; writes go to a temporary file renamed into place.
class Cache {
 public:
  // An empty directory disables the cache (every get misses, put is a no-op).
  explicit Cache(std::filesystem::path dir = {});
  bool enabled() const { return !dir_.empty(); }
  const std::filesystem::path& dir() const { return dir_; }

  std::optional<std::string> get(const std::string& kind, const std::string& key);
  void put(const std::string& kind, const std::string& key, std::string_view payload);
  std::filesystem::path entry_path(const std::string& kind, const std::string& key) const;
  CacheStats stats() const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  CacheStats stats_;
};

// Little-endian fixed-width byte streams for payloads.
class ByteWriter {
 public:
  void u64(std::uint64_t v);
  void i32(std::int32_t v);
  void f64(double v);
  void str(std::string_view s);
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}
  std::uint64_t u64();
  std::int32_t i32();
  double f64();
  std::string str();
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const;
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_measure(ByteWriter& w, const ProductMeasure& m);
ProductMeasure read_measure(ByteReader& r, const FreeProductSpec& spec);

// Powers 2..table.cached() of a convolution table.
std::string encode_powers(const ConvolutionTable& table);
// Installs decoded powers into a table holding only the base; returns the last power imported.
int decode_powers(std::string_view payload, ConvolutionTable& table, const FreeProductSpec& spec);

struct Curve {
  std::vector<double> x;
  std::vector<std::vector<double>> columns;
};
std::string encode_curve(const Curve& c);
Curve decode_curve(std::string_view payload);

}  // namespace freewalk::tools
