#include "freewalk/group.hpp"

#include <algorithm>
#include <boost/container/small_vector.hpp>
#include <boost/container_hash/hash.hpp>
#include <charconv>
#include <cstdlib>
#include <fmt/format.h>

#include "freewalk/errors.hpp"

namespace freewalk {

namespace {

using Views = boost::container::small_vector<SyllableView, 16>;

Views views_of(const GroupElement& g) {
  Views out;
  const auto& d = g.raw();
  std::size_t pos = 0;
  while (pos < d.size()) {
    const int f = d[pos];
    const int rank = d[pos + 1];
    out.push_back({f, std::span<const std::int32_t>(d.data() + pos + 2, rank)});
    pos += 2 + rank;
  }
  return out;
}

std::int32_t checked_add(std::int32_t a, std::int32_t b) {
  std::int32_t r;
  if (__builtin_add_overflow(a, b, &r)) throw Error("lattice coordinate overflow");
  return r;
}

std::int32_t checked_neg(std::int32_t a) {
  if (a == INT32_MIN) throw Error("lattice coordinate overflow");
  return -a;
}

bool all_zero(std::span<const std::int32_t> v) {
  return std::all_of(v.begin(), v.end(), [](std::int32_t c) { return c == 0; });
}

}  // namespace

FreeProductSpec::FreeProductSpec(std::vector<FactorSpec> factors) : factors_(std::move(factors)) {
  if (factors_.size() < 2) throw ConfigError("a free product needs at least two factors");
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (factors_[i].index != static_cast<int>(i) + 1)
      throw ConfigError(fmt::format("factor indices must be 1..k in order, got {} at position {}",
                                    factors_[i].index, i + 1));
    if (factors_[i].rank < 1) throw ConfigError("factor rank must be positive");
  }
}

FreeProductSpec FreeProductSpec::lattice(const std::vector<int>& ranks) {
  std::vector<FactorSpec> f;
  for (std::size_t i = 0; i < ranks.size(); ++i)
    f.push_back({static_cast<int>(i) + 1, ranks[i],
                 ranks[i] == 1 ? std::string("Z") : fmt::format("Z^{}", ranks[i])});
  return FreeProductSpec(std::move(f));
}

const FactorSpec& FreeProductSpec::factor(int index) const {
  if (index < 1 || index > size()) throw DomainError(fmt::format("no factor {}", index));
  return factors_[index - 1];
}

std::string FreeProductSpec::describe() const {
  std::string s;
  for (const auto& f : factors_) {
    if (!s.empty()) s += " * ";
    s += f.label;
  }
  return s;
}

bool FreeProductSpec::operator==(const FreeProductSpec& other) const {
  if (factors_.size() != other.factors_.size()) return false;
  for (std::size_t i = 0; i < factors_.size(); ++i)
    if (factors_[i].rank != other.factors_[i].rank) return false;
  return true;
}

GroupElement GroupElement::syllable(int factor, std::span<const std::int32_t> v) {
  if (all_zero(v)) throw DomainError("syllable vector must be nonzero");
  GroupElement g;
  g.append(factor, v);
  return g;
}

GroupElement GroupElement::syllable(int factor, std::initializer_list<std::int32_t> v) {
  return syllable(factor, std::span<const std::int32_t>(v.begin(), v.size()));
}

SyllableView GroupElement::syllable_at(int j) const {
  if (j < 0 || j >= count_) throw DomainError(fmt::format("syllable {} out of range", j));
  std::size_t pos = 0;
  for (int i = 0; i < j; ++i) pos += 2 + data_[pos + 1];
  return {data_[pos], std::span<const std::int32_t>(data_.data() + pos + 2, data_[pos + 1])};
}

std::vector<SyllableView> GroupElement::syllables() const {
  auto v = views_of(*this);
  return {v.begin(), v.end()};
}

void GroupElement::append(int factor, std::span<const std::int32_t> v) {
  if (all_zero(v)) return;
  if (count_ > 0) {
    auto views = views_of(*this);
    const SyllableView last = views.back();
    if (last.factor == factor) {
      if (last.vector.size() != v.size()) throw DomainError("rank mismatch in merge");
      const std::size_t start = static_cast<std::size_t>(last.vector.data() - data_.data());
      bool zero = true;
      for (std::size_t c = 0; c < v.size(); ++c) {
        data_[start + c] = checked_add(data_[start + c], v[c]);
        zero = zero && data_[start + c] == 0;
      }
      if (zero) {
        data_.resize(start - 2);
        --count_;
      }
      return;
    }
  }
  data_.push_back(factor);
  data_.push_back(static_cast<std::int32_t>(v.size()));
  data_.insert(data_.end(), v.begin(), v.end());
  ++count_;
}

std::size_t GroupElement::hash() const { return boost::hash_range(data_.begin(), data_.end()); }

GroupElement multiply(const GroupElement& a, const GroupElement& b) {
  if (a.is_identity()) return b;
  if (b.is_identity()) return a;
  const Views va = views_of(a);
  const Views vb = views_of(b);
  int ia = static_cast<int>(va.size()) - 1;
  int ib = 0;
  const int nb = static_cast<int>(vb.size());
  boost::container::small_vector<std::int32_t, 8> merged;
  int merged_factor = 0;
  while (ia >= 0 && ib < nb && va[ia].factor == vb[ib].factor) {
    const auto& x = va[ia].vector;
    const auto& y = vb[ib].vector;
    merged.resize(x.size());
    bool zero = true;
    for (std::size_t c = 0; c < x.size(); ++c) {
      merged[c] = checked_add(x[c], y[c]);
      zero = zero && merged[c] == 0;
    }
    if (!zero) {
      merged_factor = va[ia].factor;
      break;
    }
    merged.clear();
    --ia;
    ++ib;
  }
  GroupElement out;
  const int keep_a = merged_factor != 0 ? ia : ia + 1;
  for (int j = 0; j < keep_a; ++j) out.append(va[j].factor, va[j].vector);
  if (merged_factor != 0) {
    out.append(merged_factor, std::span<const std::int32_t>(merged.data(), merged.size()));
    ++ib;
  }
  for (int j = ib; j < nb; ++j) out.append(vb[j].factor, vb[j].vector);
  return out;
}

GroupElement inverse(const GroupElement& a) {
  const Views v = views_of(a);
  GroupElement out;
  boost::container::small_vector<std::int32_t, 8> neg;
  for (auto it = v.rbegin(); it != v.rend(); ++it) {
    neg.resize(it->vector.size());
    for (std::size_t c = 0; c < neg.size(); ++c) neg[c] = checked_neg(it->vector[c]);
    out.append(it->factor, std::span<const std::int32_t>(neg.data(), neg.size()));
  }
  return out;
}

std::int64_t word_length(const GroupElement& a) {
  std::int64_t total = 0;
  for (const auto& s : views_of(a))
    for (std::int32_t c : s.vector) total += std::abs(static_cast<std::int64_t>(c));
  return total;
}

int relative_length(const GroupElement& a) { return a.syllable_count(); }

GroupElement prefix(const GroupElement& a, int j) {
  if (j < 0 || j > a.syllable_count())
    throw DomainError(fmt::format("prefix length {} outside [0, {}]", j, a.syllable_count()));
  const Views v = views_of(a);
  GroupElement out;
  for (int i = 0; i < j; ++i) out.append(v[i].factor, v[i].vector);
  return out;
}

int common_prefix_length(const GroupElement& a, const GroupElement& b) {
  const Views va = views_of(a);
  const Views vb = views_of(b);
  const std::size_t n = std::min(va.size(), vb.size());
  std::size_t j = 0;
  while (j < n && va[j].factor == vb[j].factor &&
         std::equal(va[j].vector.begin(), va[j].vector.end(), vb[j].vector.begin(),
                    vb[j].vector.end()))
    ++j;
  return static_cast<int>(j);
}

bool length_lex_less(const GroupElement& a, const GroupElement& b) {
  const auto la = word_length(a);
  const auto lb = word_length(b);
  if (la != lb) return la < lb;
  return a.raw() < b.raw();
}

std::string to_string(const GroupElement& a) {
  if (a.is_identity()) return "e";
  std::string s;
  for (const auto& syl : views_of(a)) {
    if (!s.empty()) s += '.';
    s += fmt::format("f{}:({})", syl.factor, fmt::join(syl.vector, ","));
  }
  return s;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view s, std::string_view whole) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ConfigError(fmt::format("bad integer '{}' in element '{}'", s, whole));
  return value;
}

}  // namespace

GroupElement parse_element(const FreeProductSpec& spec, std::string_view text) {
  const std::string_view whole = text;
  text = trim(text);
  if (text == "e" || text.empty()) return {};
  GroupElement out;
  std::vector<std::int32_t> v;
  while (!text.empty()) {
    const auto dot = text.find('.');
    std::string_view part = trim(text.substr(0, dot));
    text = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
    const auto colon = part.find(':');
    if (part.size() < 5 || part.front() != 'f' || colon == std::string_view::npos ||
        part[colon + 1] != '(' || part.back() != ')')
      throw ConfigError(fmt::format("bad syllable '{}' in element '{}'", part, whole));
    const int factor = parse_int(part.substr(1, colon - 1), whole);
    if (factor < 1 || factor > spec.size())
      throw ConfigError(fmt::format("factor {} out of range in '{}'", factor, whole));
    std::string_view coords = part.substr(colon + 2, part.size() - colon - 3);
    v.clear();
    while (true) {
      const auto comma = coords.find(',');
      v.push_back(parse_int(coords.substr(0, comma), whole));
      if (comma == std::string_view::npos) break;
      coords.remove_prefix(comma + 1);
    }
    if (static_cast<int>(v.size()) != spec.rank(factor))
      throw ConfigError(fmt::format("factor {} has rank {}, got {} coordinates in '{}'", factor,
                                    spec.rank(factor), v.size(), whole));
    if (all_zero(v)) throw ConfigError(fmt::format("zero syllable in '{}'", whole));
    const int before = out.syllable_count();
    out.append(factor, v);
    if (out.syllable_count() != before + 1)
      throw ConfigError(fmt::format("'{}' is not in normal form", whole));
  }
  return out;
}

void check_element(const FreeProductSpec& spec, const GroupElement& a) {
  for (const auto& s : views_of(a)) {
    if (s.factor < 1 || s.factor > spec.size() ||
        static_cast<int>(s.vector.size()) != spec.rank(s.factor))
      throw DomainError(fmt::format("element {} does not belong to {}", to_string(a),
                                    spec.describe()));
  }
}

std::vector<std::vector<std::int32_t>> lattice_sphere(int d, int m) {
  std::vector<std::vector<std::int32_t>> out;
  if (d < 1 || m < 0) return out;
  std::vector<std::int32_t> cur(d, 0);
  auto rec = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == d - 1) {
      if (remaining == 0) {
        cur[pos] = 0;
        out.push_back(cur);
      } else {
        cur[pos] = -remaining;
        out.push_back(cur);
        cur[pos] = remaining;
        out.push_back(cur);
      }
      return;
    }
    for (int c = -remaining; c <= remaining; ++c) {
      cur[pos] = c;
      self(self, pos + 1, remaining - std::abs(c));
    }
  };
  rec(rec, 0, m);
  return out;
}

std::vector<GroupElement> enumerate_ball(const FreeProductSpec& spec, int radius,
                                         const BallOptions& options) {
  if (radius < 0) throw DomainError("ball radius must be nonnegative");
  std::vector<GroupElement> out{GroupElement{}};
  const int k = spec.size();
  // spheres[f][m]: lattice vectors of factor f with l1 norm m
  std::vector<std::vector<std::vector<std::vector<std::int32_t>>>> spheres(k + 1);
  const int max_norm =
      options.metric == BallMetric::word ? radius : std::max(1, options.syllable_norm_cap);
  for (int f = 1; f <= k; ++f) {
    spheres[f].resize(max_norm + 1);
    for (int m = 1; m <= max_norm; ++m) spheres[f][m] = lattice_sphere(spec.rank(f), m);
  }
  auto over_budget = [&](std::size_t n) {
    if (n > options.max_count)
      throw BudgetExceeded(fmt::format("ball of radius {} in {} exceeds {} elements", radius,
                                       spec.describe(), options.max_count));
  };

  for (int ell = 1; ell <= radius; ++ell) {
    std::vector<GroupElement> shell;
    GroupElement cur;
    // word metric: remaining = l1 budget left; relative metric: remaining = syllables left
    auto rec = [&](auto&& self, int last_factor, int remaining) -> void {
      if (remaining == 0) {
        shell.push_back(cur);
        over_budget(out.size() + shell.size());
        return;
      }
      for (int f = 1; f <= k; ++f) {
        if (f == last_factor) continue;
        const int top = options.metric == BallMetric::word ? remaining : max_norm;
        for (int m = 1; m <= top; ++m) {
          for (const auto& v : spheres[f][m]) {
            GroupElement saved = cur;
            cur.append(f, v);
            self(self, f, options.metric == BallMetric::word ? remaining - m : remaining - 1);
            cur = std::move(saved);
          }
        }
      }
    };
    rec(rec, 0, ell);
    if (options.metric == BallMetric::word) {
      std::sort(shell.begin(), shell.end(),
                [](const GroupElement& a, const GroupElement& b) { return a.raw() < b.raw(); });
    } else {
      std::sort(shell.begin(), shell.end(), length_lex_less);
    }
    for (auto& g : shell) out.push_back(std::move(g));
  }
  return out;
}

}  // namespace freewalk
