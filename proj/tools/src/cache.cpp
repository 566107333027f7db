#include "freewalk/tools/cache.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "freewalk/errors.hpp"
#include "freewalk/tools/config.hpp"

namespace freewalk::tools {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "cache payloads assume a little-endian host");

constexpr std::string_view kMagic = "FWCACHE1";

std::atomic<unsigned> tmp_counter{0};

}  // namespace

Cache::Cache(fs::path dir) : dir_(std::move(dir)) {
  if (!enabled()) return;
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(fmt::format("cannot create cache directory '{}': {}", dir_.string(), ec.message()));
}

fs::path Cache::entry_path(const std::string& kind, const std::string& key) const {
  return dir_ / kind / (key + ".bin");
}

CacheStats Cache::stats() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return stats_;
}

std::optional<std::string> Cache::get(const std::string& kind, const std::string& key) {
  if (!enabled()) return std::nullopt;
  const fs::path path = entry_path(kind, key);
  std::ifstream in(path, std::ios::binary);
  std::lock_guard<std::mutex> lock(mutex_);
  if (!in) {
    ++stats_.misses;
    return std::nullopt;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string file = buf.str();
  // header: magic \n kind \n key \n size \n sha256 \n payload
  auto corrupt = [&]() -> std::optional<std::string> {
    ++stats_.corrupt;
    ++stats_.misses;
    std::error_code ec;
    fs::remove(path, ec);
    return std::nullopt;
  };
  std::size_t pos = 0;
  auto line = [&](std::string& out) {
    const auto nl = file.find('\n', pos);
    if (nl == std::string::npos) return false;
    out = file.substr(pos, nl - pos);
    pos = nl + 1;
    return true;
  };
  std::string magic, k, key2, size_text, digest;
  if (!line(magic) || !line(k) || !line(key2) || !line(size_text) || !line(digest)) return corrupt();
  if (magic != kMagic || k != kind || key2 != key) return corrupt();
  std::size_t size = 0;
  try {
    size = std::stoull(size_text);
  } catch (const std::exception&) {
    return corrupt();
  }
  if (file.size() - pos != size) return corrupt();
  std::string payload = file.substr(pos);
  if (sha256_hex(payload) != digest) return corrupt();
  ++stats_.hits;
  return payload;
}

void Cache::put(const std::string& kind, const std::string& key, std::string_view payload) {
  if (!enabled()) return;
  const fs::path path = entry_path(kind, key);
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(fmt::format("cache: cannot create '{}': {}", path.parent_path().string(), ec.message()));
  const fs::path tmp =
      path.parent_path() / fmt::format(".{}.{}.{}.tmp", key, static_cast<long>(::getpid()), tmp_counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << kMagic << '\n' << kind << '\n' << key << '\n' << payload.size() << '\n' << sha256_hex(payload) << '\n';
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      throw Error(fmt::format("cache: write of '{}' failed (disk full?)", tmp.string()));
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(fmt::format("cache: cannot install '{}'", path.string()));
  }
  std::lock_guard<std::mutex> lock(mutex_);
  ++stats_.writes;
}

void ByteWriter::u64(std::uint64_t v) { out_.append(reinterpret_cast<const char*>(&v), sizeof v); }
void ByteWriter::i32(std::int32_t v) { out_.append(reinterpret_cast<const char*>(&v), sizeof v); }
void ByteWriter::f64(double v) { out_.append(reinterpret_cast<const char*>(&v), sizeof v); }
void ByteWriter::str(std::string_view s) {
  u64(s.size());
  out_.append(s);
}

void ByteReader::need(std::size_t n) const {
  if (in_.size() - pos_ < n) throw Error("cache payload truncated");
}
std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, in_.data() + pos_, 8);
  pos_ += 8;
  return v;
}
std::int32_t ByteReader::i32() {
  need(4);
  std::int32_t v;
  std::memcpy(&v, in_.data() + pos_, 4);
  pos_ += 4;
  return v;
}
double ByteReader::f64() {
  need(8);
  double v;
  std::memcpy(&v, in_.data() + pos_, 8);
  pos_ += 8;
  return v;
}
std::string ByteReader::str() {
  const auto n = u64();
  need(n);
  std::string s(in_.substr(pos_, n));
  pos_ += n;
  return s;
}

void write_measure(ByteWriter& w, const ProductMeasure& m) {
  w.u64(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto syl = m.element(i).syllables();
    w.i32(static_cast<std::int32_t>(syl.size()));
    for (const auto& s : syl) {
      w.i32(s.factor);
      for (auto c : s.vector) w.i32(c);
    }
    w.f64(m.mass(i));
  }
}

ProductMeasure read_measure(ByteReader& r, const FreeProductSpec& spec) {
  const auto n = r.u64();
  std::vector<ProductMeasure::Entry> atoms;
  atoms.reserve(n);
  std::vector<std::int32_t> v;
  for (std::uint64_t i = 0; i < n; ++i) {
    GroupElement g;
    const int count = r.i32();
    for (int j = 0; j < count; ++j) {
      const int f = r.i32();
      if (f < 1 || f > spec.size()) throw Error("cache payload names an unknown factor");
      v.assign(spec.rank(f), 0);
      for (auto& c : v) c = r.i32();
      g.append(f, v);
    }
    const double p = r.f64();
    atoms.emplace_back(std::move(g), p);
  }
  ProductMeasure m;
  m.adopt(std::move(atoms));
  return m;
}

std::string encode_powers(const ConvolutionTable& table) {
  ByteWriter w;
  w.u64(static_cast<std::uint64_t>(table.cached()));
  for (int n = 2; n <= table.cached(); ++n) write_measure(w, table.power(n));
  return w.bytes();
}

int decode_powers(std::string_view payload, ConvolutionTable& table, const FreeProductSpec& spec) {
  ByteReader r(payload);
  const int last = static_cast<int>(r.u64());
  std::vector<ProductMeasure> powers;
  for (int n = 2; n <= last; ++n) powers.push_back(read_measure(r, spec));
  if (!r.done()) throw Error("trailing bytes in cached convolution table");
  for (int n = 2; n <= last; ++n) table.import_power(n, std::move(powers[n - 2]));
  return last;
}

std::string encode_curve(const Curve& c) {
  ByteWriter w;
  w.u64(c.x.size());
  w.u64(c.columns.size());
  for (double x : c.x) w.f64(x);
  for (const auto& col : c.columns) {
    if (col.size() != c.x.size()) throw Error("ragged curve");
    for (double y : col) w.f64(y);
  }
  return w.bytes();
}

Curve decode_curve(std::string_view payload) {
  ByteReader r(payload);
  Curve c;
  const auto n = r.u64();
  const auto m = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) c.x.push_back(r.f64());
  c.columns.resize(m);
  for (auto& col : c.columns)
    for (std::uint64_t i = 0; i < n; ++i) col.push_back(r.f64());
  if (!r.done()) throw Error("trailing bytes in cached curve");
  return c;
}

}  // namespace freewalk::tools
