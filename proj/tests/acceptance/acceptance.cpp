// Acceptance gate: one PASS/FAIL line per criterion. Tolerances are fixed here.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "freewalk/ancona.hpp"
#include "freewalk/boundary.hpp"
#include "freewalk/errors.hpp"
#include "freewalk/product_green.hpp"

using namespace freewalk;

namespace {

constexpr double kTolR = 1e-6;          // 1
constexpr double kTolGerl = 1e-2;       // 1
constexpr double kTolZeta = 1e-8;       // 2
constexpr double kBracketWidth = 0.05;  // 3
constexpr double kWatson = 1.516386;    // 5
constexpr double kTolWatson = 5e-5;     // 5
constexpr double kTolSeries = 0.01;     // 6
constexpr double kTolF1 = 0.05;         // 7
constexpr double kTolCocycle = 1e-12;   // 8
constexpr double kTolRoutes = 0.03;     // 9
constexpr double kTolHarmonic = 1e-2;   // 9
constexpr double kTolRay = 0.05;        // 10
constexpr double kTolLltF2 = 0.3;       // 11
constexpr double kTolLltZ = 0.1;        // 11
constexpr double kTolPrefix = 1e-10;    // 12
constexpr double kMinR2 = 0.9;          // 12
constexpr double kTolRadical = 1e-2;    // 13

const FreeProductSpec kF2 = FreeProductSpec::lattice({1, 1});

// Excursion oracle on the 4-regular tree: F = r/4 + (3r/4) F^2, U = r F, G = 1 / (1 - U).
double tree_F(double r) { return (1.0 - std::sqrt(std::max(0.0, 1.0 - 0.75 * r * r))) / (1.5 * r); }
double tree_G(double r) { return 1.0 / (1.0 - r * tree_F(r)); }
// R from U(R) hitting the branch point of F: 1 - 3R^2/4 = 0.
const double kR_F2 = std::sqrt(4.0 / 3.0);

struct Outcome {
  bool pass = false;
  std::string detail;
};

GreenCalculus f2(double eps = 0.0) {
  GreenCalculusOptions o;
  o.laziness = eps;
  return GreenCalculus(AdaptedMeasure::simple(kF2, {0.5, 0.5}), o);
}

GroupElement el(const FreeProductSpec& s, const char* t) { return parse_element(s, t); }

Outcome c1() {
  const auto g = f2();
  const auto& r = g.compute_R();
  const double dR = std::abs(r.R - kR_F2);
  const double dG = std::abs(r.green_at_R - tree_G(kR_F2));
  const double d1 = std::abs(g.green(GroupElement{}, 1.0) - tree_G(1.0));
  ConvolutionTable t(lazy(lift(g.measure()), 0.5), 0.5);
  t.extend_to(7);
  GerlOptions o;
  o.laziness = 0.5;
  const auto est = gerl_R_estimate(return_probabilities(t, 14), o);
  const double dGerl = std::abs(est.R_base - r.R);
  return {dR <= kTolR && dG <= kTolR && d1 <= kTolR && dGerl <= kTolGerl && !est.inconclusive,
          fmt::format("|dR| {:.2e}, |dG(R)| {:.2e}, |dG(1)| {:.2e}, Gerl |dR| {:.2e}", dR, dG, d1, dGerl)};
}

Outcome c2() {
  const auto g = f2();
  // alpha_i theta = rho / sqrt(1 - rho^2) with theta = R G(R) from the tree oracle
  const double u = 0.5 * kR_F2 * tree_G(kR_F2);
  const double rho = u / std::sqrt(1.0 + u * u);
  double worst = 0.0;
  for (int i = 1; i <= 2; ++i) worst = std::max(worst, std::abs(g.zeta(i, g.R_base()) - rho));
  const auto rep = g.spectral_report();
  const bool nd = rep.non_degenerate && !rep.degenerate[0] && !rep.degenerate[1];
  return {worst <= kTolZeta && std::abs(rho - std::sqrt(3.0) / 2.0) <= kTolZeta && nd,
          fmt::format("max |zeta - rho| {:.2e}, non-degenerate {}", worst, nd)};
}

Outcome c3() {
  const auto spec = FreeProductSpec::lattice({5, 1});
  const std::vector<LatticeMeasure> f{LatticeMeasure::simple(1, 5), LatticeMeasure::simple(2, 1)};
  const auto tune = tune_alpha(f, spec, 9);
  if (!tune.bracket) return {false, "no sign change on the grid"};
  const auto b = refine_alpha_bracket(f, spec, tune.bracket->first, tune.bracket->second, kBracketWidth);
  const auto lo = GreenCalculus(AdaptedMeasure::simple(spec, {0.05, 0.95})).spectral_report();
  const auto hi = GreenCalculus(AdaptedMeasure::simple(spec, {0.95, 0.05})).spectral_report();
  const bool ok_lo = lo.non_degenerate;
  const bool ok_hi = !hi.non_degenerate && hi.degenerate[0] && !hi.degenerate[1] && hi.convergent &&
                     hi.degeneracy_rank == 5 && hi.derivative_order == 2;
  return {b.second - b.first <= kBracketWidth && ok_lo && ok_hi,
          fmt::format("bracket [{:.4f}, {:.4f}], low endpoint nd {}, high endpoint degenerate/convergent/d=5/s=2 {}",
                      b.first, b.second, ok_lo, ok_hi)};
}

Outcome c4() {
  const auto spec = FreeProductSpec::lattice({2, 1});
  const std::vector<LatticeMeasure> f{LatticeMeasure::simple(1, 2), LatticeMeasure::simple(2, 1)};
  const auto tune = tune_alpha(f, spec, 9);
  int bad = 0;
  for (const auto& p : tune.grid) bad += !p.non_degenerate;
  return {bad == 0 && tune.grid.size() == 9, fmt::format("{} of {} grid points degenerate", bad, tune.grid.size())};
}

Outcome c5() {
  FactorGreenOptions o;
  o.mode = QuadratureMode::grid;
  o.grid_refine = true;
  const FactorGreenEvaluator z3(LatticeMeasure::simple(1, 3), o);
  const auto v = z3.green({0, 0, 0}, 1.0);
  const double d = std::abs(v.value - kWatson);
  return {d <= kTolWatson, fmt::format("G = {:.7f}, error estimate {:.1e}, |d| {:.1e}", v.value, v.error, d)};
}

Outcome c6() {
  double worst = 0.0;
  std::string where;
  const std::vector<std::pair<FreeProductSpec, std::vector<double>>> cases{{kF2, {0.5, 0.5}},
                                                                          {FreeProductSpec::lattice({3, 1}), {0.75, 0.25}}};
  for (const auto& [spec, w] : cases) {
    const GreenCalculus g(AdaptedMeasure::simple(spec, w));
    ConvolutionTable t(lift(g.measure()));
    t.extend_to(8);
    ElementSampler s(spec, 11, 0, 4);
    std::vector<GroupElement> ys{GroupElement{}};
    while (ys.size() < 24) {
      const auto y = s.next();
      if (word_length(y) <= 4) ys.push_back(y);
    }
    for (const auto& y : ys)
      for (double f : {0.5, 0.8, 0.95}) {
        const double r = f * g.R();
        const double a = g.green(y, r);
        const double b = direct_series_green(t, y, r, g.R(), 16).value;
        const double rel = std::abs(a - b) / a;
        if (rel > worst) {
          worst = rel;
          where = fmt::format("{} at {}R", to_string(y), f);
        }
      }
  }
  return {worst <= kTolSeries, fmt::format("max relative gap {:.2e} ({})", worst, where)};
}

Outcome c7() {
  const auto g = f2();
  const double r = 0.9 * g.R();
  const double f1 = F_k_exact(g, 1, GroupElement{}, r);
  const auto s = iterated_sum(g, 1, GroupElement{}, GroupElement{}, r, 8);
  std::vector<double> gaps;
  for (int radius = 4; radius <= 8; ++radius) gaps.push_back(std::abs(s.by_radius[radius] - f1) / f1);
  bool mono = true;
  for (std::size_t j = 1; j < gaps.size(); ++j) mono = mono && gaps[j] < gaps[j - 1];
  return {gaps.back() <= kTolF1 && mono && !s.truncated,
          fmt::format("relative gap radius 4: {:.3e}, radius 8: {:.3e}, decreasing {}", gaps.front(), gaps.back(), mono)};
}

Outcome c8() {
  ConvolutionTable t(lift(AdaptedMeasure::simple(kF2, {0.5, 0.5})));
  t.extend_to(8);
  ElementSampler s(kF2, 5, 0, 3);
  int done = 0, tries = 0;
  double worst = 0.0;
  while (done < 100 && tries < 100000) {
    ++tries;
    const auto g = s.next(), h = s.next(), z = s.next();
    const int n = 1 + static_cast<int>(s.uniform(16));
    const auto z2 = multiply(inverse(g), z);
    const double pz = t.transition(z, n), pz2 = t.transition(z2, n);
    if (!(pz > 0.0 && pz2 > 0.0)) continue;
    const double lhs = t.transition(multiply(g, h), z, n) / pz;
    const double rhs = t.transition(h, z2, n) / pz2 * (t.transition(g, z, n) / pz);
    if (lhs == 0.0 && rhs == 0.0) {
      ++done;
      continue;
    }
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
    ++done;
  }
  return {done == 100 && worst <= kTolCocycle, fmt::format("{} samples, max relative gap {:.2e}", done, worst)};
}

Outcome c9() {
  const auto g = f2(0.5);
  ConvolutionTable t(lazy(lift(g.measure()), 0.5), 0.5);
  t.extend_to(10);
  const std::vector<const char*> xs{"f1:(1)", "f2:(-1)"};
  const std::vector<const char*> ys{"e", "f1:(1)", "f2:(1).f1:(1)", "f1:(-1).f2:(1).f1:(1)", "f2:(2).f1:(-1)"};
  double worst = 0.0;
  for (const char* x : xs)
    for (const char* y : ys) {
      const double a = h_finite_n(t, el(kF2, x), el(kF2, y), n_range(10, 20), 4).limit;
      const double b = h_via_sums(g, el(kF2, x), el(kF2, y), 1, default_r_grid(g.R())).limit;
      worst = std::max(worst, std::abs(a - b) / std::abs(b));
    }
  // R^-1-harmonicity of H(., y) at x = e for the lazy measure
  const auto mu = lazy(lift(g.measure()), 0.5);
  const auto y = el(kF2, "f1:(1).f2:(1)");
  auto residual = [&](int n_max) {
    const auto u = [&](const GroupElement& x) -> std::optional<double> {
      return h_finite_n(t, x, y, n_range(4, n_max), 4).limit;
    };
    return harmonicity_residual(u, GroupElement{}, mu, 1.0 / g.R()) / (*u(GroupElement{}) / g.R());
  };
  const double r10 = residual(10), r14 = residual(14);
  return {worst <= kTolRoutes && r14 <= kTolHarmonic && r14 < r10,
          fmt::format("max route gap {:.2e} over {} pairs; harmonicity n_max 10: {:.2e}, 14: {:.2e}", worst,
                      xs.size() * ys.size(), r10, r14)};
}

Outcome ray_case(const std::string& name, const GreenCalculus& g, const RaySpec& ray) {
  const RatioLimitKernel H(&g, nullptr, {});
  double worst8 = 0.0;
  bool below4 = true;
  for (const auto& x : enumerate_ball(g.spec(), 2)) {
    if (x.is_identity()) continue;
    const auto p = hk_ratio_along_ray(g, H, x, ray, {4, 8});
    const double d4 = std::abs(p.ratios[0] - 1.0), d8 = std::abs(p.ratios[1] - 1.0);
    worst8 = std::max(worst8, d8);
    below4 = below4 && d8 <= d4 + 1e-12;
  }
  return {worst8 <= kTolRay && below4,
          fmt::format("{}: max deviation at depth 8 {:.3f}, below depth 4 {}", name, worst8, below4)};
}

Outcome c10() {
  const auto z5z = FreeProductSpec::lattice({5, 1});
  const auto a = ray_case("F2", f2(), RaySpec(GroupElement{}, el(kF2, "f1:(1).f2:(1)")));
  const auto b = ray_case("Z5*Z", GreenCalculus(AdaptedMeasure::simple(z5z, {0.9, 0.1})),
                          RaySpec(GroupElement{}, el(z5z, "f1:(1,0,0,0,0).f2:(1)")));
  return {a.pass && b.pass, a.detail + "; " + b.detail};
}

Outcome c11() {
  const auto g = f2(0.5);
  ConvolutionTable t(lazy(lift(g.measure()), 0.5), 0.5);
  t.extend_to(10);
  const auto fit = llt_fit(t, GroupElement{}, GroupElement{}, 4, 20, g.R());
  // simple walk on Z: P^{2m}(0, 0) = C(2m, m) 4^{-m}
  std::vector<int> n;
  std::vector<double> p;
  for (int m = 2; m <= 20; ++m) {
    n.push_back(2 * m);
    p.push_back(std::exp(std::lgamma(2 * m + 1.0) - 2 * std::lgamma(m + 1.0) - 2 * m * std::log(2.0)));
  }
  const auto zfit = llt_fit(n, p, 1.0);
  return {std::abs(fit.exponent - 1.5) <= kTolLltF2 && std::abs(zfit.exponent - 0.5) <= kTolLltZ,
          fmt::format("F2 lazy exponent {:.4f} (least squares {:.4f}), Z exponent {:.4f}", fit.exponent,
                      fit.exponent_ls, zfit.exponent)};
}

Outcome c12() {
  const auto g = f2();
  AnconaOptions o;
  o.count = 200;
  const auto weak = weak_ancona_scan(g, {0.5 * g.R(), 0.8 * g.R(), g.R()}, o);
  double prefix = 0.0;
  for (const auto& lv : weak.levels) prefix = std::max(prefix, lv.prefix_identity_error);
  const auto z3z = GreenCalculus(AdaptedMeasure::simple(FreeProductSpec::lattice({3, 1}), {0.75, 0.25}));
  for (const auto& lv : weak_ancona_scan(z3z, {0.5 * z3z.R(), z3z.R()}, o).levels)
    prefix = std::max(prefix, lv.prefix_identity_error);
  const auto strong = strong_ancona_fit(g, {2, 3, 4, 5, 6, 7, 8}, g.R(), o);
  const bool fit_ok = strong.fitted && strong.alpha > 0.0 && strong.alpha < 1.0 && strong.r_squared > kMinR2;
  int zeros = 0;
  for (int z : strong.zero_count) zeros += z;
  return {prefix <= kTolPrefix && fit_ok,
          fmt::format("prefix identity {:.1e}; decay fit {} (points {}, alpha {:.3f}, R^2 {:.3f}, {} of {} cross "
                      "ratios at rounding level)",
                      prefix, strong.fitted ? "done" : "impossible", strong.points_used, strong.alpha,
                      strong.r_squared, zeros, o.count * strong.depths.size())};
}

Outcome c13() {
  const auto g = f2();
  const RatioLimitKernel H(&g, nullptr, {});
  const Kernel k = [&](const GroupElement& x, const GroupElement& y) { return H(x, y); };
  const auto scan = radical_scan(kF2, 3, k, enumerate_ball(kF2, 2), kTolRadical);
  const bool trivial = scan.candidates.size() == 1 && scan.candidates[0].is_identity();
  double min_dev = 1e300;
  for (std::size_t i = 0; i < scan.elements.size(); ++i)
    if (!scan.elements[i].is_identity()) min_dev = std::min(min_dev, scan.deviation[i]);
  return {trivial, fmt::format("{} candidates over {} elements, smallest nontrivial deviation {:.3e}",
                               scan.candidates.size(), scan.elements.size(), min_dev)};
}

}  // namespace

int main(int argc, char** argv) {
  // optional arguments select criteria by number
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"F2 spectral radius and Green values", c1},
      {"zeta closed form and classifier", c2},
      {"Z5*Z alpha sweep", c3},
      {"Z2*Z non-degenerate grid", c4},
      {"Z3 lattice Green quadrature", c5},
      {"product Green vs direct series", c6},
      {"first-order iterated sum identity", c7},
      {"finite-n cocycle identity", c8},
      {"ratio-limit route consistency and harmonicity", c9},
      {"ray convergence of H/K_R", c10},
      {"local limit exponent", c11},
      {"Ancona suite", c12},
      {"ratio-limit radical", c13},
  };
  std::vector<bool> run(criteria.size(), argc < 2);
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k >= 1 && k <= static_cast<int>(criteria.size())) run[k - 1] = true;
  }
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!run[i]) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !out.pass;
    std::printf("%s %2zu %s: %s [%.1fs]\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                out.detail.c_str(), sec);
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria failed\n", failed, ran);
  return failed == 0 ? 0 : 1;
}
