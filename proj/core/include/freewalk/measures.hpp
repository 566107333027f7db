#pragma once

#include <atomic>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "freewalk/errors.hpp"
#include "freewalk/group.hpp"
#include "freewalk/parallel.hpp"

namespace freewalk {

using Rational = boost::multiprecision::cpp_rational;

struct LatticeAtom {
  std::vector<std::int32_t> v;
  double p = 0.0;
};

// Finitely supported symmetric probability on Z^d.
class LatticeMeasure {
 public:
  // Weights are normalized when `normalize` is set, otherwise they must sum to 1 within 1e-12.
  LatticeMeasure(int factor_index, int rank, std::vector<LatticeAtom> atoms, bool normalize = false);

  // Uniform on the 2d unit vectors, with optional holding mass at 0.
  static LatticeMeasure simple(int factor_index, int rank, double holding = 0.0);

  int factor_index() const { return factor_index_; }
  int rank() const { return rank_; }
  const std::vector<LatticeAtom>& atoms() const { return atoms_; }
  double mass_at_origin() const;
  double probability(const std::vector<std::int32_t>& v) const;

  bool is_symmetric() const;
  // The support generates Z^d as a group (integer row reduction).
  bool generates_lattice() const;
  // Every atom lies on a coordinate axis.
  bool axis_supported() const;
  // Invariant under each sign flip k_j -> -k_j.
  bool reflection_symmetric() const;
  // Invariant under all coordinate permutations and sign flips.
  bool hyperoctahedral() const;

  // Covariance sum_v p v v^T, row major d x d.
  std::vector<double> covariance() const;
  // sum_v p cos(k.v); rejects non-symmetric measures.
  double char_function(const std::vector<double>& k) const;

  bool operator==(const LatticeMeasure& other) const;

 private:
  int factor_index_;
  int rank_;
  std::vector<LatticeAtom> atoms_;
};

// mu = sum_i alpha_i mu_i on Gamma.
class AdaptedMeasure {
 public:
  AdaptedMeasure(FreeProductSpec spec, std::vector<double> weights,
                 std::vector<LatticeMeasure> measures);

  // Simple random walk on every factor with the given weights.
  static AdaptedMeasure simple(const FreeProductSpec& spec, std::vector<double> weights);

  const FreeProductSpec& spec() const { return spec_; }
  const std::vector<double>& weights() const { return weights_; }
  double weight(int i) const { return weights_.at(i - 1); }
  const LatticeMeasure& factor_measure(int i) const { return measures_.at(i - 1); }
  int size() const { return spec_.size(); }

 private:
  FreeProductSpec spec_;
  std::vector<double> weights_;
  std::vector<LatticeMeasure> measures_;
};

// Finitely supported measure on Gamma. Atoms are kept in length-lex order with a hash index.
template <class T>
class BasicProductMeasure {
 public:
  using Entry = std::pair<GroupElement, T>;

  BasicProductMeasure() = default;
  // Duplicate elements are summed; zero atoms dropped.
  explicit BasicProductMeasure(std::vector<Entry> atoms) {
    std::unordered_map<GroupElement, T> acc;
    acc.reserve(atoms.size());
    for (auto& [g, p] : atoms) acc[g] += p;
    std::vector<Entry> clean;
    clean.reserve(acc.size());
    for (auto& [g, p] : acc)
      if (p != T(0)) clean.emplace_back(g, p);
    adopt(std::move(clean));
  }

  static BasicProductMeasure delta() { return BasicProductMeasure({{GroupElement{}, T(1)}}); }

  std::size_t size() const { return elements_.size(); }
  const GroupElement& element(std::size_t i) const { return elements_[i]; }
  const T& mass(std::size_t i) const { return masses_[i]; }
  const std::vector<GroupElement>& elements() const { return elements_; }

  T operator()(const GroupElement& g) const {
    const auto i = find(g);
    return i < 0 ? T(0) : masses_[static_cast<std::size_t>(i)];
  }

  std::ptrdiff_t find(const GroupElement& g) const {
    if (index_.empty()) return -1;
    const std::size_t mask = index_.size() - 1;
    for (std::size_t slot = g.hash() & mask;; slot = (slot + 1) & mask) {
      const std::uint32_t j = index_[slot];
      if (j == kEmpty) return -1;
      if (elements_[j] == g) return j;
    }
  }

  T total_mass() const {
    T s(0);
    for (const auto& m : masses_) s += m;
    return s;
  }

  bool is_symmetric(double tol = 1e-14) const {
    for (std::size_t i = 0; i < size(); ++i) {
      const T other = (*this)(inverse(elements_[i]));
      if constexpr (std::is_floating_point_v<T>) {
        if (std::abs(other - masses_[i]) > tol * std::abs(masses_[i])) return false;
      } else {
        if (other != masses_[i]) return false;
      }
    }
    return true;
  }

  // Takes ownership of atoms that are already unique.
  void adopt(std::vector<Entry> atoms) {
    std::sort(atoms.begin(), atoms.end(),
              [](const Entry& a, const Entry& b) { return length_lex_less(a.first, b.first); });
    elements_.clear();
    masses_.clear();
    elements_.reserve(atoms.size());
    masses_.reserve(atoms.size());
    for (auto& [g, p] : atoms) {
      elements_.push_back(std::move(g));
      masses_.push_back(std::move(p));
    }
    std::size_t cap = 8;
    while (cap < 2 * elements_.size()) cap <<= 1;
    index_.assign(cap, kEmpty);
    const std::size_t mask = cap - 1;
    for (std::uint32_t j = 0; j < elements_.size(); ++j) {
      std::size_t slot = elements_[j].hash() & mask;
      while (index_[slot] != kEmpty) slot = (slot + 1) & mask;
      index_[slot] = j;
    }
  }

 private:
  static constexpr std::uint32_t kEmpty = 0xffffffffu;
  std::vector<GroupElement> elements_;
  std::vector<T> masses_;
  std::vector<std::uint32_t> index_;
};

using ProductMeasure = BasicProductMeasure<double>;
using RationalProductMeasure = BasicProductMeasure<Rational>;

ProductMeasure lift(const AdaptedMeasure& a);
// Same atoms, every double read as the exact binary rational it stores.
RationalProductMeasure lift_exact(const AdaptedMeasure& a);
// eps delta_e + (1 - eps) mu.
ProductMeasure lazy(const ProductMeasure& mu, double eps);

struct ConvolveOptions {
  std::size_t max_atoms = 50'000'000;
  int jobs = 1;
};

// (mu * nu)(g) = sum_h mu(h) nu(h^{-1} g). The left support is cut into a fixed number of
// blocks so the summation order does not depend on the worker count.
template <class T>
BasicProductMeasure<T> convolve(const BasicProductMeasure<T>& mu, const BasicProductMeasure<T>& nu,
                                const ConvolveOptions& options = {}) {
  constexpr std::size_t kBlocks = 16;
  const std::size_t n = mu.size();
  const std::size_t blocks = std::min<std::size_t>(kBlocks, std::max<std::size_t>(n, 1));
  std::vector<std::unordered_map<GroupElement, T>> partial(blocks);
  std::atomic<bool> overflow{false};
  std::vector<std::size_t> done_rows(blocks, 0);
  parallel_for_blocks(blocks, options.jobs, [&](std::size_t b) {
    const std::size_t lo = n * b / blocks;
    const std::size_t hi = n * (b + 1) / blocks;
    auto& acc = partial[b];
    for (std::size_t i = lo; i < hi; ++i) {
      if (overflow.load(std::memory_order_relaxed)) return;
      const GroupElement& h = mu.element(i);
      for (std::size_t j = 0; j < nu.size(); ++j) acc[multiply(h, nu.element(j))] += mu.mass(i) * nu.mass(j);
      if (acc.size() > options.max_atoms) {
        overflow = true;
        return;
      }
      done_rows[b] = i + 1 - lo;
    }
  });
  if (overflow) {
    double deficit = 0.0;
    if constexpr (std::is_floating_point_v<T>) {
      for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t lo = n * b / blocks;
        const std::size_t hi = n * (b + 1) / blocks;
        for (std::size_t i = lo + done_rows[b]; i < hi; ++i) deficit += mu.mass(i);
      }
    } else {
      deficit = 1.0;
    }
    throw BudgetExceeded("convolution support exceeds the atom cap of " +
                             std::to_string(options.max_atoms),
                         deficit);
  }
  std::unordered_map<GroupElement, T> total = std::move(partial[0]);
  for (std::size_t b = 1; b < blocks; ++b) {
    // merge in block order: deterministic given the fixed partition
    std::vector<std::pair<GroupElement, T>> items(partial[b].begin(), partial[b].end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& c) { return a.first.raw() < c.first.raw(); });
    for (auto& [g, p] : items) total[g] += p;
    partial[b].clear();
    if (total.size() > options.max_atoms)
      throw BudgetExceeded("convolution support exceeds the atom cap", 0.0);
  }
  std::vector<std::pair<GroupElement, T>> atoms;
  atoms.reserve(total.size());
  for (auto& [g, p] : total)
    if (p != T(0)) atoms.emplace_back(g, p);
  BasicProductMeasure<T> out;
  out.adopt(std::move(atoms));
  return out;
}

struct ValidationOptions {
  int admissibility_steps = 4;
  std::size_t admissibility_budget = 200'000;
  int aperiodicity_cap = 24;
  int aperiodicity_window = 8;
};

enum class Verdict { yes, no, inconclusive };
std::string to_string(Verdict v);

struct ValidationReport {
  Verdict probability = Verdict::no;
  Verdict symmetric = Verdict::no;
  Verdict admissible = Verdict::no;
  Verdict aperiodic = Verdict::inconclusive;
  double total_mass = 0.0;
  int period = 0;            // 1 or 2 when known
  int aperiodic_from = -1;   // n_0 with mu^{*n}(e) > 0 on [n_0, n_0 + window]
  std::vector<std::string> notes;
};

ValidationReport validate(const ProductMeasure& mu, const FreeProductSpec& spec,
                          const ValidationOptions& options = {});

struct TableOptions {
  std::size_t max_atoms = 50'000'000;
  int jobs = 1;
};

// Cached convolution powers mu^{*0..N}. One writer extends the cache under a mutex; readers of
// already computed powers only read an atomic count.
class ConvolutionTable {
 public:
  static constexpr int kMaxPowers = 512;

  explicit ConvolutionTable(ProductMeasure base, double laziness = 0.0, TableOptions options = {});

  const ProductMeasure& base() const { return *powers_[1]; }
  double laziness() const { return laziness_; }
  int cached() const { return cached_.load(std::memory_order_acquire); }

  void extend_to(int n);
  // Installs a precomputed mu^{*n} (from a cache); n must be cached() + 1.
  void import_power(int n, ProductMeasure p);
  const ProductMeasure& power(int n) const;

  // P^n(x, y) = mu^{*n}(x^{-1} y). Beyond the cache, up to twice the cached depth, the value is
  // assembled as sum_s mu^{*a}(g s^{-1}) mu^{*b}(s) with a + b = n.
  double transition(const GroupElement& x, const GroupElement& y, int n) const;
  double transition(const GroupElement& g, int n) const;
  // Largest n that transition() can answer without extending the cache.
  int reach() const { return 2 * cached(); }

 private:
  std::vector<std::unique_ptr<ProductMeasure>> powers_;
  std::atomic<int> cached_{0};
  std::mutex writer_;
  double laziness_;
  TableOptions options_;
};

// mu^{*n} computed exactly over the rationals (oracle use, small n).
RationalProductMeasure exact_power(const RationalProductMeasure& mu, int n);

}  // namespace freewalk
