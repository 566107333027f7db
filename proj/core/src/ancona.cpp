#include "freewalk/ancona.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "freewalk/errors.hpp"
#include "freewalk/numerics.hpp"

namespace freewalk {

namespace {

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t i = static_cast<std::size_t>(std::floor(q * (v.size() - 1)));
  return v[i];
}

// Deviations below this are rounding noise of an exact identity.
constexpr double kZeroLevel = 1e-13;

}  // namespace

ElementSampler::ElementSampler(FreeProductSpec spec, std::uint64_t seed, int min_syllables, int max_syllables,
                               int coordinate_cap)
    : spec_(std::move(spec)), rng_(seed), min_(min_syllables), max_(max_syllables), cap_(coordinate_cap) {
  if (min_ < 0 || max_ < min_ || cap_ < 1) throw ConfigError("invalid sampler bounds");
}

std::uint64_t ElementSampler::uniform(std::uint64_t n) {
  // rejection sampling keeps the stream identical across standard libraries
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    const std::uint64_t v = rng_();
    if (v < limit) return v % n;
  }
}

GroupElement ElementSampler::next() { return next(min_ + static_cast<int>(uniform(max_ - min_ + 1))); }

GroupElement ElementSampler::next(int syllables) {
  GroupElement g;
  int prev = 0;
  const int k = spec_.size();
  for (int j = 0; j < syllables; ++j) {
    int f = 1 + static_cast<int>(uniform(prev == 0 ? k : k - 1));
    if (prev != 0 && f >= prev) ++f;
    std::vector<std::int32_t> v(spec_.rank(f), 0);
    bool nonzero = false;
    while (!nonzero) {
      for (auto& c : v) {
        c = static_cast<std::int32_t>(uniform(2 * cap_ + 1)) - cap_;
        nonzero = nonzero || c != 0;
      }
    }
    g.append(f, v);
    prev = f;
  }
  return g;
}

const GroupElement& ElementSampler::pick(const std::vector<GroupElement>& list) {
  if (list.empty()) throw DomainError("pick from an empty list");
  return list[uniform(list.size())];
}

AnconaReport weak_ancona_scan(const GreenCalculus& g, const std::vector<double>& r_grid, const AnconaOptions& options) {
  AnconaReport rep;
  rep.count = options.count;
  rep.seed = options.seed;
  ElementSampler sampler(g.spec(), options.seed, 1, options.max_syllables, options.coordinate_cap);
  const auto ball = enumerate_ball(g.spec(), options.perturbation_radius);
  // one fixed sample set reused for every r
  struct Draw {
    GroupElement x, z;
    int j;
  };
  std::vector<Draw> draws;
  for (std::size_t i = 0; i < options.count; ++i) {
    Draw d;
    d.z = sampler.next();
    d.j = static_cast<int>(sampler.uniform(d.z.syllable_count() + 1));
    d.x = sampler.pick(ball);
    draws.push_back(std::move(d));
  }
  double lo = std::numeric_limits<double>::infinity();
  for (double r : r_grid) {
    AnconaLevel lv;
    lv.r = r;
    const double gee = g.green(GroupElement{}, r);
    std::vector<double> ratios;
    for (const auto& d : draws) {
      const GroupElement y = prefix(d.z, d.j);
      const double pr = g.green(d.z, r) / (g.green(y, r) * g.green(y, d.z, r));
      lv.prefix_identity_error = std::max(lv.prefix_identity_error, std::abs(pr * gee - 1.0));
      const double ratio = g.green(d.x, d.z, r) / (g.green(d.x, y, r) * g.green(y, d.z, r));
      if (!(ratio > 0.0) || !std::isfinite(ratio))
        throw NumericalInconsistency(fmt::format("non-positive Ancona ratio at r = {}", r));
      ratios.push_back(ratio);
      if (options.keep_samples) rep.samples.push_back({d.x, y, d.z, r, ratio});
    }
    lv.max_ratio = *std::max_element(ratios.begin(), ratios.end());
    lv.median_ratio = quantile(ratios, 0.5);
    lv.p90_ratio = quantile(ratios, 0.9);
    rep.C_hat = std::max(rep.C_hat, lv.max_ratio);
    lo = std::min(lo, lv.max_ratio);
    rep.levels.push_back(lv);
  }
  rep.uniformity = rep.levels.empty() ? 0.0 : rep.C_hat / lo;
  return rep;
}

DecayFit strong_ancona_fit(const GreenCalculus& g, const std::vector<int>& depths, double r,
                           const AnconaOptions& options) {
  DecayFit fit;
  ElementSampler sampler(g.spec(), options.seed, 1, 3, options.coordinate_cap);
  const auto ball = enumerate_ball(g.spec(), options.perturbation_radius);
  std::vector<double> xs, ys;
  for (int n : depths) {
    if (n < 0) throw DomainError("negative fellow-travel depth");
    std::vector<double> dev;
    int zeros = 0;
    for (std::size_t i = 0; i < options.count; ++i) {
      const GroupElement w = sampler.next(n);
      const GroupElement x = sampler.pick(ball);
      const GroupElement x2 = sampler.pick(ball);
      // tails start in a factor different from w's last one so y and y' keep w as a prefix
      GroupElement t, t2;
      do {
        t = sampler.next();
        t2 = sampler.next();
      } while (!w.is_identity() && (t.syllable_at(0).factor == w.syllable_at(n - 1).factor ||
                                    t2.syllable_at(0).factor == w.syllable_at(n - 1).factor));
      const GroupElement y = multiply(w, t);
      const GroupElement y2 = multiply(w, t2);
      const double cr = g.green(x, y, r) * g.green(x2, y2, r) / (g.green(x, y2, r) * g.green(x2, y, r));
      const double d = std::abs(cr - 1.0);
      dev.push_back(d);
      if (d <= kZeroLevel) ++zeros;
    }
    fit.depths.push_back(n);
    fit.median_deviation.push_back(quantile(dev, 0.5));
    fit.max_deviation.push_back(*std::max_element(dev.begin(), dev.end()));
    fit.zero_count.push_back(zeros);
    if (fit.median_deviation.back() > kZeroLevel) {
      xs.push_back(n);
      ys.push_back(std::log(fit.median_deviation.back()));
    } else {
      fit.notes.push_back(fmt::format(
          "depth {}: median deviation at rounding level ({} of {} samples exact); excluded from the fit", n, zeros,
          options.count));
    }
  }
  fit.points_used = static_cast<int>(xs.size());
  if (xs.size() >= 2) {
    const auto ls = least_squares(xs, ys, {[](double) { return 1.0; }, [](double m) { return m; }});
    fit.C = std::exp(ls.coeffs[0]);
    fit.alpha = std::exp(ls.coeffs[1]);
    fit.r_squared = ls.r_squared;
    fit.fitted = true;
  } else {
    fit.notes.push_back("fewer than two depths with nonzero deviations: no decay fit possible");
  }
  return fit;
}

}  // namespace freewalk
