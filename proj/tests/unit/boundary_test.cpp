#include <gtest/gtest.h>

#include <cmath>

#include "freewalk/boundary.hpp"
#include "freewalk/errors.hpp"

using namespace freewalk;

namespace {

const FreeProductSpec kZZ = FreeProductSpec::lattice({1, 1});
GroupElement el(const char* s) { return parse_element(kZZ, s); }

std::vector<double> z_returns(int n_max) {
  std::vector<double> p;
  for (int n = 0; n <= n_max; ++n)
    p.push_back(n % 2 ? 0.0 : std::exp(std::lgamma(n + 1) - 2 * std::lgamma(n / 2 + 1) - n * std::log(2.0)));
  return p;
}

}  // namespace

TEST(FiniteN, IdentityGivesOne) {
  ConvolutionTable t(lift(AdaptedMeasure::simple(kZZ, {0.5, 0.5})));
  t.extend_to(4);
  const auto p = h_finite_n(t, GroupElement{}, el("f1:(1).f2:(1)"), n_range(4, 8));
  EXPECT_EQ(p.limit, 1.0);
  for (double v : p.values) EXPECT_EQ(v, 1.0);
}

TEST(FiniteN, SkipsZeroDenominatorsAndChecksReach) {
  ConvolutionTable t(lift(AdaptedMeasure::simple(kZZ, {0.5, 0.5})));
  t.extend_to(4);
  const auto p = h_finite_n(t, el("f1:(1)"), el("f2:(1)"), n_range(2, 8));
  EXPECT_EQ(p.values.size(), 3u);  // odd n only
  EXPECT_FALSE(p.notes.empty());
  EXPECT_THROW(h_finite_n(t, el("f1:(1)"), GroupElement{}, {9}), DomainError);
}

TEST(FiniteN, AgreesWithSumsOnLazyF2) {
  GreenCalculusOptions o;
  o.laziness = 0.5;
  const GreenCalculus g(AdaptedMeasure::simple(kZZ, {0.5, 0.5}), o);
  ConvolutionTable t(lazy(lift(g.measure()), 0.5), 0.5);
  t.extend_to(10);
  for (const char* x : {"f1:(1)", "f2:(-1)"})
    for (const char* y : {"e", "f1:(1)", "f1:(-1).f2:(1)"}) {
      const double a = h_finite_n(t, el(x), el(y), n_range(10, 20)).limit;
      const double b = h_via_sums(g, el(x), el(y), 1, default_r_grid(g.R())).limit;
      EXPECT_NEAR(a, b, 0.03 * b) << x << " " << y;
    }
}

TEST(Sums, RefusesBelowCriticalOrder) {
  const GreenCalculus g(AdaptedMeasure::simple(FreeProductSpec::lattice({5, 1}), {0.95, 0.05}));
  const auto y = parse_element(g.spec(), "f2:(1)");
  const auto x = parse_element(g.spec(), "f1:(1,0,0,0,0)");
  EXPECT_THROW(h_via_sums(g, x, y, 1, default_r_grid(g.R())), DomainError);
  EXPECT_NO_THROW(h_via_sums(g, x, y, 2, default_r_grid(g.R())));
}

TEST(Sums, RejectsGridOutsideInterval) {
  const GreenCalculus g(AdaptedMeasure::simple(kZZ, {0.5, 0.5}));
  EXPECT_THROW(h_via_sums(g, el("f1:(1)"), GroupElement{}, 1, {g.R()}), DomainError);
}

TEST(Kernel, MethodParsing) {
  EXPECT_EQ(parse_h_method("sums"), HMethod::sums);
  EXPECT_EQ(parse_h_method("finite-n"), HMethod::finite_n);
  EXPECT_THROW(parse_h_method("other"), ConfigError);
  EXPECT_THROW(RatioLimitKernel(nullptr, nullptr, {}), ConfigError);
}

TEST(Harmonicity, GreenKernelHarmonicAwayFromPole) {
  const GreenCalculus g(AdaptedMeasure::simple(kZZ, {0.5, 0.5}));
  const double r = 0.9 * g.R();
  const auto y = el("f1:(1).f2:(1)");
  const auto u = [&](const GroupElement& x) -> std::optional<double> { return g.green(x, y, r); };
  const auto mu = lift(g.measure());
  for (const auto& x : enumerate_ball(kZZ, 2)) {
    const double res = harmonicity_residual(u, x, mu, 1.0 / r);
    if (x == y)
      EXPECT_NEAR(res, 1.0 / r, 1e-12);
    else
      EXPECT_LT(res, 1e-12) << to_string(x);
  }
}

TEST(Harmonicity, UndefinedNeighbourThrows) {
  const auto mu = lift(AdaptedMeasure::simple(kZZ, {0.5, 0.5}));
  const auto u = [](const GroupElement& x) -> std::optional<double> {
    if (x.is_identity()) return 1.0;
    return std::nullopt;
  };
  EXPECT_THROW(harmonicity_residual(u, GroupElement{}, mu, 1.0), DomainError);
}

TEST(Ray, DepthsFollowHeadThenPeriod) {
  const RaySpec ray(el("f2:(1)"), el("f1:(1).f2:(-1)"));
  EXPECT_TRUE(ray.at_depth(0).is_identity());
  EXPECT_EQ(ray.at_depth(1), el("f2:(1)"));
  EXPECT_EQ(ray.at_depth(4), el("f2:(1).f1:(1).f2:(-1).f1:(1)"));
  for (int n = 0; n < 8; ++n) EXPECT_EQ(ray.at_depth(n).syllable_count(), n);
}

TEST(Ray, RejectsBadShapes) {
  EXPECT_THROW(RaySpec(GroupElement{}, GroupElement{}), DomainError);
  EXPECT_THROW(RaySpec(GroupElement{}, el("f1:(1).f2:(1).f1:(1)")), DomainError);
  EXPECT_THROW(RaySpec(el("f1:(1)"), el("f1:(1).f2:(1)")), DomainError);
}

TEST(Ray, RatioForF2ApproachesOne) {
  const GreenCalculus g(AdaptedMeasure::simple(kZZ, {0.5, 0.5}));
  const RatioLimitKernel H(&g, nullptr, {});
  const RaySpec ray(GroupElement{}, el("f1:(1).f2:(1)"));
  const auto prof = hk_ratio_along_ray(g, H, el("f1:(-1)"), ray, {2, 4, 6, 8});
  ASSERT_EQ(prof.ratios.size(), 4u);
  EXPECT_TRUE(prof.monotone);
  EXPECT_LT(prof.last_deviation, prof.max_deviation);
  const auto trivial = hk_ratio_along_ray(g, H, GroupElement{}, ray, {2, 4});
  EXPECT_EQ(trivial.max_deviation, 0.0);
}

TEST(Metric, Axioms) {
  const GreenCalculus g(AdaptedMeasure::simple(kZZ, {0.5, 0.5}));
  const double r = 0.8 * g.R();
  const Kernel k = [&](const GroupElement& x, const GroupElement& y) { return g.martin_kernel(x, y, r); };
  const auto pts = enumerate_ball(kZZ, 2);
  const auto cfg = calibrate_metric(kZZ, 21, k, pts);
  EXPECT_EQ(cfg.order.size(), 21u);
  EXPECT_NEAR(cfg.tail_bound(), std::pow(2.0, -20), 1e-18);
  for (std::size_t a = 0; a < pts.size(); a += 3)
    for (std::size_t b = 0; b < pts.size(); b += 2) {
      const double d = boundary_metric(pts[a], pts[b], k, cfg);
      EXPECT_NEAR(d, boundary_metric(pts[b], pts[a], k, cfg), 1e-15);
      if (a == b)
        EXPECT_EQ(d, 0.0);
      else
        EXPECT_GT(d, 0.0);
      for (std::size_t c = 1; c < pts.size(); c += 5)
        EXPECT_LE(d, boundary_metric(pts[a], pts[c], k, cfg) + boundary_metric(pts[c], pts[b], k, cfg) + 1e-14);
    }
  EXPECT_THROW(calibrate_metric(kZZ, 0, k, pts), DomainError);
}

TEST(Metric, RaysSeparate) {
  const GreenCalculus g(AdaptedMeasure::simple(kZZ, {0.5, 0.5}));
  const Kernel k = [&](const GroupElement& x, const GroupElement& y) { return g.martin_kernel(x, y, g.R()); };
  const auto cfg = calibrate_metric(kZZ, 21, k, enumerate_ball(kZZ, 2));
  const RaySpec a(GroupElement{}, el("f1:(1).f2:(1)")), b(GroupElement{}, el("f2:(1).f1:(1)"));
  const double same = boundary_metric(a.at_depth(6), a.at_depth(8), k, cfg);
  const double apart = boundary_metric(a.at_depth(8), b.at_depth(8), k, cfg);
  EXPECT_LT(same, apart);
}

TEST(Radical, F2OnlyIdentity) {
  const GreenCalculus g(AdaptedMeasure::simple(kZZ, {0.5, 0.5}));
  const RatioLimitKernel H(&g, nullptr, {});
  const Kernel k = [&](const GroupElement& x, const GroupElement& y) { return H(x, y); };
  const auto scan = radical_scan(kZZ, 2, k, enumerate_ball(kZZ, 1), 1e-2);
  ASSERT_EQ(scan.candidates.size(), 1u);
  EXPECT_TRUE(scan.candidates[0].is_identity());
  for (std::size_t i = 0; i < scan.elements.size(); ++i)
    if (word_length(scan.elements[i]) == 1) EXPECT_GT(scan.deviation[i], 0.1);
}

TEST(Llt, SimpleWalkOnZ) {
  const auto p = z_returns(200);
  std::vector<int> n;
  std::vector<double> v;
  for (int k = 40; k <= 200; k += 2) {
    n.push_back(k);
    v.push_back(p[k]);
  }
  const auto fit = llt_fit(n, v, 1.0);
  EXPECT_NEAR(fit.exponent, 0.5, 0.1);
  EXPECT_NEAR(fit.exponent_ls, 0.5, 1e-3);
  EXPECT_NEAR(fit.coefficient, std::sqrt(2.0 / M_PI), 1e-3);
}

TEST(Llt, TranslationInvariant) {
  ConvolutionTable t(lazy(lift(AdaptedMeasure::simple(kZZ, {0.5, 0.5})), 0.5), 0.5);
  t.extend_to(6);
  const auto g = el("f1:(1).f2:(-1)");
  const auto x = el("f2:(1)"), y = el("f1:(-1)");
  const double R = 1.0 / (0.5 + 0.5 * std::sqrt(3.0) / 2.0);
  const auto a = llt_fit(t, x, y, 4, 12, R);
  const auto b = llt_fit(t, multiply(g, x), multiply(g, y), 4, 12, R);
  EXPECT_EQ(a.exponent, b.exponent);
  EXPECT_EQ(a.exponent_ls, b.exponent_ls);
  EXPECT_THROW(llt_fit(t, x, y, 4, 13, R), DomainError);
}
