#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace freewalk {

struct FactorSpec {
  int index = 0;  // 1-based
  int rank = 1;
  std::string label;
};

// Gamma = Z^{d_1} * ... * Z^{d_k}, k >= 2.
class FreeProductSpec {
 public:
  explicit FreeProductSpec(std::vector<FactorSpec> factors);

  // Factors labelled "Z^d" with the given ranks.
  static FreeProductSpec lattice(const std::vector<int>& ranks);

  int size() const { return static_cast<int>(factors_.size()); }
  const FactorSpec& factor(int index) const;
  int rank(int index) const { return factor(index).rank; }
  const std::vector<FactorSpec>& factors() const { return factors_; }
  std::string describe() const;

  bool operator==(const FreeProductSpec& other) const;

 private:
  std::vector<FactorSpec> factors_;
};

struct SyllableView {
  int factor;
  std::span<const std::int32_t> vector;
};

// Normal form word. Storage is flat: for every syllable [factor, rank, c_1..c_rank].
// The identity is the empty word.
class GroupElement {
 public:
  GroupElement() = default;

  // Single syllable (factor, v); v must be nonzero.
  static GroupElement syllable(int factor, std::span<const std::int32_t> v);
  static GroupElement syllable(int factor, std::initializer_list<std::int32_t> v);

  bool is_identity() const { return data_.empty(); }
  int syllable_count() const { return count_; }
  SyllableView syllable_at(int j) const;
  std::vector<SyllableView> syllables() const;

  // Append a syllable, merging or cancelling with the last one when the factor matches.
  void append(int factor, std::span<const std::int32_t> v);

  const std::vector<std::int32_t>& raw() const { return data_; }
  std::size_t hash() const;

  bool operator==(const GroupElement& other) const { return data_ == other.data_; }
  bool operator!=(const GroupElement& other) const { return !(*this == other); }

 private:
  std::vector<std::int32_t> data_;
  int count_ = 0;
};

struct GroupElementHash {
  std::size_t operator()(const GroupElement& g) const { return g.hash(); }
};

GroupElement multiply(const GroupElement& a, const GroupElement& b);
GroupElement inverse(const GroupElement& a);
std::int64_t word_length(const GroupElement& a);
int relative_length(const GroupElement& a);
GroupElement prefix(const GroupElement& a, int j);
int common_prefix_length(const GroupElement& a, const GroupElement& b);

// Word length first, then lexicographic on (factor, coordinates) syllable by syllable.
bool length_lex_less(const GroupElement& a, const GroupElement& b);

std::string to_string(const GroupElement& a);
GroupElement parse_element(const FreeProductSpec& spec, std::string_view text);
// Checks factor indices and ranks against the spec.
void check_element(const FreeProductSpec& spec, const GroupElement& a);

enum class BallMetric { word, relative };

struct BallOptions {
  BallMetric metric = BallMetric::word;
  std::size_t max_count = 20'000'000;
  // Relative balls are infinite; syllables are restricted to l1 norm <= this.
  int syllable_norm_cap = 1;
};

// Every element with length <= radius, once, in length-lexicographic order.
// Throws BudgetExceeded when more than max_count elements would be produced.
std::vector<GroupElement> enumerate_ball(const FreeProductSpec& spec, int radius,
                                         const BallOptions& options = {});

// All vectors of Z^d with l1 norm exactly m, in lexicographic order.
std::vector<std::vector<std::int32_t>> lattice_sphere(int d, int m);

}  // namespace freewalk

template <>
struct std::hash<freewalk::GroupElement> {
  std::size_t operator()(const freewalk::GroupElement& g) const noexcept { return g.hash(); }
};
