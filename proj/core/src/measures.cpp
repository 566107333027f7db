#include "freewalk/measures.hpp"

#include <algorithm>
#include <cstdlib>
#include <fmt/format.h>
#include <map>
#include <numeric>
#include <set>

namespace freewalk {

namespace {

bool is_zero_vector(const std::vector<std::int32_t>& v) {
  return std::all_of(v.begin(), v.end(), [](std::int32_t c) { return c == 0; });
}

std::vector<std::int32_t> negated(const std::vector<std::int32_t>& v) {
  std::vector<std::int32_t> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = -v[i];
  return out;
}

// Integer row reduction; true when the rows generate Z^d.
bool rows_generate_lattice(std::vector<std::vector<std::int64_t>> rows, int d) {
  std::size_t top = 0;
  std::int64_t det = 1;
  for (int col = 0; col < d; ++col) {
    // Euclid on column `col` among rows [top, end)
    while (true) {
      std::size_t best = rows.size();
      for (std::size_t r = top; r < rows.size(); ++r) {
        if (rows[r][col] == 0) continue;
        if (best == rows.size() || std::llabs(rows[r][col]) < std::llabs(rows[best][col])) best = r;
      }
      if (best == rows.size()) return false;  // rank deficient
      std::swap(rows[top], rows[best]);
      bool reduced = true;
      for (std::size_t r = top + 1; r < rows.size(); ++r) {
        if (rows[r][col] == 0) continue;
        const std::int64_t q = rows[r][col] / rows[top][col];
        for (int c = col; c < d; ++c) rows[r][c] -= q * rows[top][c];
        if (rows[r][col] != 0) reduced = false;
      }
      if (reduced) break;
    }
    det *= rows[top][col];
    ++top;
  }
  return std::llabs(det) == 1;
}

}  // namespace

LatticeMeasure::LatticeMeasure(int factor_index, int rank, std::vector<LatticeAtom> atoms,
                               bool normalize)
    : factor_index_(factor_index), rank_(rank) {
  if (rank < 1) throw ConfigError("lattice rank must be positive");
  std::map<std::vector<std::int32_t>, double> merged;
  for (auto& a : atoms) {
    if (static_cast<int>(a.v.size()) != rank)
      throw ConfigError(fmt::format("atom of length {} in a rank-{} measure", a.v.size(), rank));
    if (!(a.p > 0.0) || !std::isfinite(a.p))
      throw ConfigError("lattice measure weights must be positive and finite");
    merged[a.v] += a.p;
  }
  if (merged.empty()) throw ConfigError("lattice measure has empty support");
  double total = 0.0;
  for (const auto& [v, p] : merged) total += p;
  if (normalize) {
    for (auto& [v, p] : merged) p /= total;
  } else if (std::abs(total - 1.0) > 1e-12) {
    throw ConfigError(fmt::format("lattice measure mass {} is not 1", total));
  }
  for (auto& [v, p] : merged) atoms_.push_back({v, p});
}

LatticeMeasure LatticeMeasure::simple(int factor_index, int rank, double holding) {
  std::vector<LatticeAtom> atoms;
  if (holding > 0.0) atoms.push_back({std::vector<std::int32_t>(rank, 0), holding});
  const double p = (1.0 - holding) / (2.0 * rank);
  for (int j = 0; j < rank; ++j)
    for (int s : {-1, 1}) {
      std::vector<std::int32_t> v(rank, 0);
      v[j] = s;
      atoms.push_back({v, p});
    }
  return LatticeMeasure(factor_index, rank, std::move(atoms));
}

double LatticeMeasure::mass_at_origin() const { return probability(std::vector<std::int32_t>(rank_, 0)); }

double LatticeMeasure::probability(const std::vector<std::int32_t>& v) const {
  auto it = std::lower_bound(atoms_.begin(), atoms_.end(), v,
                             [](const LatticeAtom& a, const std::vector<std::int32_t>& x) { return a.v < x; });
  return it != atoms_.end() && it->v == v ? it->p : 0.0;
}

bool LatticeMeasure::is_symmetric() const {
  for (const auto& a : atoms_)
    if (std::abs(probability(negated(a.v)) - a.p) > 1e-14 * a.p) return false;
  return true;
}

bool LatticeMeasure::generates_lattice() const {
  std::vector<std::vector<std::int64_t>> rows;
  for (const auto& a : atoms_)
    if (!is_zero_vector(a.v)) rows.emplace_back(a.v.begin(), a.v.end());
  return !rows.empty() && rows_generate_lattice(std::move(rows), rank_);
}

bool LatticeMeasure::axis_supported() const {
  for (const auto& a : atoms_) {
    int nonzero = 0;
    for (auto c : a.v) nonzero += c != 0;
    if (nonzero > 1) return false;
  }
  return true;
}

bool LatticeMeasure::reflection_symmetric() const {
  for (const auto& a : atoms_)
    for (int j = 0; j < rank_; ++j) {
      auto w = a.v;
      w[j] = -w[j];
      if (std::abs(probability(w) - a.p) > 1e-14 * a.p) return false;
    }
  return true;
}

bool LatticeMeasure::hyperoctahedral() const {
  if (!reflection_symmetric()) return false;
  for (const auto& a : atoms_)
    for (int j = 0; j + 1 < rank_; ++j) {
      auto w = a.v;
      std::swap(w[j], w[j + 1]);
      if (std::abs(probability(w) - a.p) > 1e-14 * a.p) return false;
    }
  return true;
}

std::vector<double> LatticeMeasure::covariance() const {
  std::vector<double> c(static_cast<std::size_t>(rank_ * rank_), 0.0);
  for (const auto& a : atoms_)
    for (int i = 0; i < rank_; ++i)
      for (int j = 0; j < rank_; ++j) c[i * rank_ + j] += a.p * a.v[i] * a.v[j];
  return c;
}

double LatticeMeasure::char_function(const std::vector<double>& k) const {
  if (static_cast<int>(k.size()) != rank_) throw DomainError("wavevector has the wrong dimension");
  if (!is_symmetric()) throw DomainError("characteristic function requires a symmetric measure");
  double s = 0.0;
  for (const auto& a : atoms_) {
    double phase = 0.0;
    for (int j = 0; j < rank_; ++j) phase += k[j] * a.v[j];
    s += a.p * std::cos(phase);
  }
  return s;
}

bool LatticeMeasure::operator==(const LatticeMeasure& other) const {
  if (rank_ != other.rank_ || atoms_.size() != other.atoms_.size()) return false;
  for (std::size_t i = 0; i < atoms_.size(); ++i)
    if (atoms_[i].v != other.atoms_[i].v || atoms_[i].p != other.atoms_[i].p) return false;
  return true;
}

AdaptedMeasure::AdaptedMeasure(FreeProductSpec spec, std::vector<double> weights,
                               std::vector<LatticeMeasure> measures)
    : spec_(std::move(spec)), weights_(std::move(weights)), measures_(std::move(measures)) {
  const int k = spec_.size();
  if (static_cast<int>(weights_.size()) != k || static_cast<int>(measures_.size()) != k)
    throw ConfigError(fmt::format("need {} weights and {} factor measures", k, k));
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    if (!(weights_[i] > 0.0))
      throw ConfigError(fmt::format("weight alpha_{} must be positive (got {})", i + 1, weights_[i]));
    total += weights_[i];
    if (measures_[i].factor_index() != i + 1 || measures_[i].rank() != spec_.rank(i + 1))
      throw ConfigError(fmt::format("factor measure {} does not match factor {}", i + 1, i + 1));
    if (!measures_[i].is_symmetric())
      throw ConfigError(fmt::format("factor measure {} is not symmetric", i + 1));
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError(fmt::format("weights sum to {}, not 1", total));
}

AdaptedMeasure AdaptedMeasure::simple(const FreeProductSpec& spec, std::vector<double> weights) {
  std::vector<LatticeMeasure> m;
  for (int i = 1; i <= spec.size(); ++i) m.push_back(LatticeMeasure::simple(i, spec.rank(i)));
  return AdaptedMeasure(spec, std::move(weights), std::move(m));
}

ProductMeasure lift(const AdaptedMeasure& a) {
  std::vector<ProductMeasure::Entry> atoms;
  double at_e = 0.0;
  for (int i = 1; i <= a.size(); ++i) {
    for (const auto& atom : a.factor_measure(i).atoms()) {
      if (is_zero_vector(atom.v)) {
        at_e += a.weight(i) * atom.p;
      } else {
        atoms.emplace_back(GroupElement::syllable(i, atom.v), a.weight(i) * atom.p);
      }
    }
  }
  if (at_e > 0.0) atoms.emplace_back(GroupElement{}, at_e);
  return ProductMeasure(std::move(atoms));
}

RationalProductMeasure lift_exact(const AdaptedMeasure& a) {
  std::vector<RationalProductMeasure::Entry> atoms;
  for (int i = 1; i <= a.size(); ++i) {
    const Rational w(a.weight(i));
    for (const auto& atom : a.factor_measure(i).atoms()) {
      const Rational p = w * Rational(atom.p);
      atoms.emplace_back(is_zero_vector(atom.v) ? GroupElement{} : GroupElement::syllable(i, atom.v), p);
    }
  }
  return RationalProductMeasure(std::move(atoms));
}

ProductMeasure lazy(const ProductMeasure& mu, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw DomainError("laziness must lie in [0, 1)");
  std::vector<ProductMeasure::Entry> atoms;
  atoms.reserve(mu.size() + 1);
  for (std::size_t i = 0; i < mu.size(); ++i) atoms.emplace_back(mu.element(i), (1.0 - eps) * mu.mass(i));
  atoms.emplace_back(GroupElement{}, eps);
  return ProductMeasure(std::move(atoms));
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::yes: return "yes";
    case Verdict::no: return "no";
    default: return "inconclusive";
  }
}

namespace {

// Searches for a homomorphism chi: Gamma -> Z/2 taking the value 1 on every atom. One exists iff
// the walk is bipartite (period 2).
bool has_odd_character(const ProductMeasure& mu, const FreeProductSpec& spec) {
  int bits = 0;
  std::vector<int> offset(spec.size() + 1, 0);
  for (int f = 1; f <= spec.size(); ++f) {
    offset[f] = bits;
    bits += spec.rank(f);
  }
  if (bits > 24) return false;  // search space too large; caller falls back to the window search
  for (std::uint32_t mask = 0; mask < (1u << bits); ++mask) {
    bool ok = true;
    for (std::size_t i = 0; i < mu.size() && ok; ++i) {
      int parity = 0;
      for (const auto& s : mu.element(i).syllables())
        for (std::size_t c = 0; c < s.vector.size(); ++c)
          if ((mask >> (offset[s.factor] + c)) & 1u) parity ^= s.vector[c] & 1;
      ok = parity == 1;
    }
    if (ok) return true;
  }
  return false;
}

}  // namespace

ValidationReport validate(const ProductMeasure& mu, const FreeProductSpec& spec,
                          const ValidationOptions& options) {
  ValidationReport r;
  for (const auto& g : mu.elements()) check_element(spec, g);
  r.total_mass = mu.total_mass();
  bool positive = true;
  for (std::size_t i = 0; i < mu.size(); ++i) positive = positive && mu.mass(i) > 0.0;
  r.probability = positive && std::abs(r.total_mass - 1.0) <= 1e-12 ? Verdict::yes : Verdict::no;
  r.symmetric = mu.is_symmetric() ? Verdict::yes : Verdict::no;

  // Admissibility. One-syllable supports are decided exactly per factor; otherwise products of
  // the support are explored up to a bounded number of steps.
  bool one_syllable = true;
  for (const auto& g : mu.elements()) one_syllable = one_syllable && g.syllable_count() <= 1;
  if (one_syllable && r.symmetric == Verdict::yes) {
    bool all = true;
    for (int f = 1; f <= spec.size(); ++f) {
      std::vector<std::vector<std::int64_t>> rows;
      for (const auto& g : mu.elements())
        if (g.syllable_count() == 1 && g.syllable_at(0).factor == f)
          rows.emplace_back(g.syllable_at(0).vector.begin(), g.syllable_at(0).vector.end());
      if (rows.empty() || !rows_generate_lattice(rows, spec.rank(f))) {
        all = false;
        r.notes.push_back(fmt::format("support does not generate factor {}", f));
      }
    }
    r.admissible = all ? Verdict::yes : Verdict::no;
  } else {
    std::set<std::vector<std::int32_t>> seen{GroupElement{}.raw()};
    std::vector<GroupElement> frontier{GroupElement{}};
    for (int step = 0; step < options.admissibility_steps && !frontier.empty(); ++step) {
      std::vector<GroupElement> next;
      for (const auto& h : frontier)
        for (const auto& s : mu.elements()) {
          GroupElement g = multiply(h, s);
          if (seen.insert(g.raw()).second) next.push_back(std::move(g));
          if (seen.size() > options.admissibility_budget) break;
        }
      frontier = std::move(next);
    }
    bool covered = true;
    for (const auto& g : enumerate_ball(spec, 1))
      if (!g.is_identity() && !seen.count(g.raw())) covered = false;
    r.admissible = covered ? Verdict::yes : Verdict::inconclusive;
    if (!covered) r.notes.push_back("generators not reached within the step budget");
  }

  // Aperiodicity. Symmetric walks return at time 2, so the period is 1 or 2.
  if (mu(GroupElement{}) > 0.0) {
    r.aperiodic = Verdict::yes;
    r.period = 1;
    r.aperiodic_from = 0;
  } else if (has_odd_character(mu, spec)) {
    r.aperiodic = Verdict::no;
    r.period = 2;
    r.notes.push_back("a parity character is 1 on the support: period 2");
  } else {
    ConvolutionTable table(mu);
    try {
      table.extend_to(std::min(options.aperiodicity_cap, 12));
    } catch (const BudgetExceeded&) {
    }
    int first_odd = -1;
    for (int n = 1; n <= table.cached() && first_odd < 0; n += 2)
      if (table.power(n)(GroupElement{}) > 0.0) first_odd = n;
    if (first_odd > 0) {
      r.aperiodic = Verdict::yes;
      r.period = 1;
      r.aperiodic_from = first_odd - 1;
      bool window = true;
      for (int n = first_odd - 1; n <= std::min(table.reach(), first_odd - 1 + options.aperiodicity_window); ++n)
        window = window && table.transition(GroupElement{}, n) > 0.0;
      if (!window) r.aperiodic = Verdict::inconclusive;
    } else {
      r.aperiodic = Verdict::inconclusive;
      r.notes.push_back("no odd return found below the search cap");
    }
  }
  return r;
}

ConvolutionTable::ConvolutionTable(ProductMeasure base, double laziness, TableOptions options)
    : laziness_(laziness), options_(options) {
  powers_.resize(kMaxPowers + 1);
  powers_[0] = std::make_unique<ProductMeasure>(ProductMeasure::delta());
  powers_[1] = std::make_unique<ProductMeasure>(std::move(base));
  cached_.store(1, std::memory_order_release);
}

void ConvolutionTable::extend_to(int n) {
  if (n > kMaxPowers) throw BudgetExceeded(fmt::format("convolution power {} beyond table limit", n));
  std::lock_guard<std::mutex> lock(writer_);
  int have = cached_.load(std::memory_order_acquire);
  const ConvolveOptions copts{options_.max_atoms, options_.jobs};
  while (have < n) {
    powers_[have + 1] = std::make_unique<ProductMeasure>(convolve(*powers_[have], *powers_[1], copts));
    ++have;
    cached_.store(have, std::memory_order_release);
  }
}

void ConvolutionTable::import_power(int n, ProductMeasure p) {
  std::lock_guard<std::mutex> lock(writer_);
  const int have = cached_.load(std::memory_order_acquire);
  if (n != have + 1 || n > kMaxPowers) throw DomainError(fmt::format("cannot import power {} after {}", n, have));
  powers_[n] = std::make_unique<ProductMeasure>(std::move(p));
  cached_.store(n, std::memory_order_release);
}

const ProductMeasure& ConvolutionTable::power(int n) const {
  if (n < 0 || n > cached()) throw DomainError(fmt::format("power {} not cached (have {})", n, cached()));
  return *powers_[n];
}

double ConvolutionTable::transition(const GroupElement& x, const GroupElement& y, int n) const {
  return transition(multiply(inverse(x), y), n);
}

double ConvolutionTable::transition(const GroupElement& g, int n) const {
  const int c = cached();
  if (n < 0) throw DomainError("negative step count");
  if (n <= c) return power(n)(g);
  if (n > 2 * c)
    throw BudgetExceeded(fmt::format("P^{} needs powers up to {} but only {} are cached", n, (n + 1) / 2, c));
  const ProductMeasure& left = power(c);
  const ProductMeasure& right = power(n - c);
  double s = 0.0;
  for (std::size_t i = 0; i < right.size(); ++i) {
    const double a = left(multiply(g, inverse(right.element(i))));
    if (a != 0.0) s += a * right.mass(i);
  }
  return s;
}

RationalProductMeasure exact_power(const RationalProductMeasure& mu, int n) {
  if (n < 0) throw DomainError("negative power");
  RationalProductMeasure acc = RationalProductMeasure::delta();
  for (int i = 0; i < n; ++i) acc = convolve(acc, mu);
  return acc;
}

}  // namespace freewalk
