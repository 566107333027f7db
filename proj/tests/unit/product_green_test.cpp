#include <gtest/gtest.h>

#include <cmath>

#include "freewalk/errors.hpp"
#include "freewalk/product_green.hpp"

using namespace freewalk;

namespace {

const FreeProductSpec kZZ = FreeProductSpec::lattice({1, 1});
const double kR = 2.0 / std::sqrt(3.0);

// Simple walk on the 4-regular tree: first passage to a fixed neighbour solves
// F = r/4 + (3r/4) F^2, and G(e, y|r) = F^|y| / (1 - r F).
double tree_first_passage(double r) { return (1.0 - std::sqrt(std::max(0.0, 1.0 - 0.75 * r * r))) / (1.5 * r); }
double tree_green(double r, int dist) {
  const double F = tree_first_passage(r);
  return std::pow(F, dist) / (1.0 - r * F);
}

GreenCalculus f2() { return GreenCalculus(AdaptedMeasure::simple(kZZ, {0.5, 0.5})); }

GreenCalculus z5z(double a1) {
  return GreenCalculus(AdaptedMeasure::simple(FreeProductSpec::lattice({5, 1}), {a1, 1.0 - a1}));
}

GroupElement el(const char* s) { return parse_element(kZZ, s); }

}  // namespace

TEST(PhiPsi, ClosedFormsOnF2) {
  const auto g = f2();
  const double s = 2.0 * std::sqrt(3.0);
  EXPECT_NEAR(g.phi(s), 3.0, 1e-10);
  EXPECT_NEAR(g.psi(s), 0.0, 1e-10);
  EXPECT_NEAR(g.phi(1e-9), 1.0, 1e-8);
  EXPECT_NEAR(g.psi(1e-9), 1.0, 1e-8);
}

TEST(ComputeR, F2AgainstTreeOracle) {
  const auto g = f2();
  const auto& r = g.compute_R();
  EXPECT_NEAR(r.theta, 2.0 * std::sqrt(3.0), 1e-10);
  EXPECT_NEAR(r.R, kR, 1e-12);
  EXPECT_NEAR(r.green_at_R, tree_green(kR, 0), 1e-9);
  EXPECT_NEAR(r.green_at_R, 3.0, 1e-9);
  EXPECT_TRUE(std::isinf(r.theta_bar));
  EXPECT_TRUE(r.interior_root);
}

TEST(ComputeR, F2GreenAtOne) {
  EXPECT_NEAR(f2().green(GroupElement{}, 1.0), 1.5, 1e-12);
  EXPECT_NEAR(tree_green(1.0, 0), 1.5, 1e-15);
}

TEST(ComputeR, Z5ZLargeAlphaStopsAtThetaBar) {
  const auto g = z5z(0.95);
  const auto& r = g.compute_R();
  EXPECT_FALSE(r.interior_root);
  EXPECT_DOUBLE_EQ(r.theta, r.theta_bar);
  EXPECT_GT(r.psi_at_theta_bar, 0.0);
}

TEST(Zeta, F2ClosedFormAtR) {
  const auto g = f2();
  for (int i = 1; i <= 2; ++i) EXPECT_NEAR(g.zeta(i, g.R_base()), std::sqrt(3.0) / 2.0, 1e-10);
  EXPECT_NEAR(g.zeta(1, 1e-8), 0.0, 1e-7);
}

TEST(Zeta, MonotoneOnGrid) {
  const auto g = z5z(0.3);
  double last = -1.0;
  for (int j = 1; j <= 20; ++j) {
    const double z = g.zeta(1, g.R_base() * j / 20.0);
    EXPECT_GT(z, last);
    last = z;
  }
}

TEST(Green, TreeOracleOverBall) {
  const auto g = f2();
  for (double f : {0.3, 0.7, 0.95, 1.0})
    for (const auto& y : enumerate_ball(kZZ, 3)) {
      const double r = f * kR;
      EXPECT_NEAR(g.green(y, r), tree_green(r, static_cast<int>(word_length(y))), 1e-10) << to_string(y);
    }
}

TEST(Green, OneSyllableReducesToFactorRatio) {
  const auto g = z5z(0.4);
  const double r = 0.8 * g.R();
  const double rb = g.base_argument(r);
  const double zeta = g.zeta(1, rb);
  const auto y = parse_element(FreeProductSpec::lattice({5, 1}), "f1:(1,1,0,0,0)");
  const std::vector<std::int32_t> o(5, 0), v{1, 1, 0, 0, 0};
  const double expect =
      g.green(GroupElement{}, r) * g.factor(1).green(v, zeta).value / g.factor(1).green(o, zeta).value;
  EXPECT_NEAR(g.green(y, r), expect, 1e-12 * expect);
}

TEST(Green, LazyTransform) {
  GreenCalculusOptions o;
  o.laziness = 0.3;
  const GreenCalculus lazy(AdaptedMeasure::simple(kZZ, {0.5, 0.5}), o);
  const auto plain = f2();
  EXPECT_NEAR(lazy.R(), 1.0 / (0.3 + 0.7 / kR), 1e-12);
  const double r = 0.9 * lazy.R();
  const double rp = 0.7 * r / (1.0 - 0.3 * r);
  EXPECT_NEAR(lazy.green(el("f1:(1).f2:(1)"), r), plain.green(el("f1:(1).f2:(1)"), rp) / (1.0 - 0.3 * r), 1e-12);
}

TEST(Green, MatchesDirectSeries) {
  const auto g = f2();
  ConvolutionTable t(lift(g.measure()));
  t.extend_to(10);
  for (const auto& y : enumerate_ball(kZZ, 2))
    for (double f : {0.5, 0.8, 0.95}) {
      const double r = f * kR;
      const auto s = direct_series_green(t, y, r, g.R(), 20);
      EXPECT_NEAR(s.value, g.green(y, r), 0.01 * g.green(y, r)) << to_string(y) << " " << f;
    }
}

TEST(GreenJet, MatchesFiniteDifferences) {
  const auto g = f2();
  const auto y = el("f1:(1).f2:(-1)");
  const double r = 0.7 * kR, h = 1e-4;
  const Jet j = g.green_jet(y, r);
  EXPECT_NEAR(j.value(), g.green(y, r), 1e-14);
  EXPECT_NEAR(j.derivative(1), (g.green(y, r + h) - g.green(y, r - h)) / (2 * h), 1e-7);
  // tree oracle derivative
  const double d = (tree_green(r + h, 2) - tree_green(r - h, 2)) / (2 * h);
  EXPECT_NEAR(j.derivative(1), d, 1e-7);
}

TEST(MartinKernel, Identities) {
  const auto g = f2();
  const double r = 0.9 * kR;
  const auto x = el("f1:(1).f2:(1)");
  const auto y = el("f1:(1).f2:(1).f1:(2).f2:(-1)");
  EXPECT_DOUBLE_EQ(g.martin_kernel(GroupElement{}, y, r), 1.0);
  EXPECT_NEAR(g.martin_kernel(x, x, r), g.green(GroupElement{}, r) / g.green(x, r), 1e-13);
  // x a prefix of y: K_r(x, y) = G(x, y) / G(e, y) = G(e, e) / G(e, x) on the tree
  EXPECT_NEAR(g.martin_kernel(x, y, r), tree_green(r, 0) / tree_green(r, 2), 1e-10);
}

TEST(IteratedSum, LowerBoundFromIdentityTerm) {
  const auto g = f2();
  const double r = 0.3 * kR;
  const auto s = iterated_sum(g, 1, GroupElement{}, GroupElement{}, r, 3);
  const double G = g.green(GroupElement{}, r);
  EXPECT_GE(s.value, G * G);
  EXPECT_FALSE(s.truncated);
  EXPECT_EQ(s.by_radius.size(), 4u);
}

TEST(IteratedSum, GrowsTowardsR) {
  const auto g = f2();
  double last = 0.0;
  for (double f : {0.5, 0.8, 0.95, 0.99}) {
    const double v = F_k_exact(g, 1, GroupElement{}, f * kR);
    EXPECT_GT(v, last);
    last = v;
  }
  EXPECT_GT(last, 10.0);
}

TEST(Fk, FirstOrderAgainstSeries) {
  const auto g = f2();
  ConvolutionTable t(lift(g.measure()));
  t.extend_to(10);
  const double r = 0.5 * kR;
  const auto s = direct_series_green(t, GroupElement{}, r, g.R(), 20, 1);
  EXPECT_NEAR(F_k_exact(g, 1, GroupElement{}, r), s.value, 1e-6 * s.value);
  const auto fd = F_k(g, 1, GroupElement{}, GroupElement{}, {r});
  EXPECT_NEAR(fd[0].value, s.value, 1e-6 * s.value);
}

TEST(Fk, AtZero) {
  const auto g = f2();
  EXPECT_NEAR(F_k_exact(g, 1, GroupElement{}, 1e-9), 1.0, 1e-8);
}

TEST(Fk, SecondOrderAgainstIteratedSum) {
  const auto g = f2();
  const double r = 0.8 * kR;
  const auto I2 = iterated_sum(g, 2, GroupElement{}, GroupElement{}, r, 6);
  const double F2 = F_k_exact(g, 2, GroupElement{}, r);
  EXPECT_NEAR(2.0 * r * I2.value, F2, 0.05 * F2);
}

TEST(Gerl, LazyF2WithinOnePercent) {
  ConvolutionTable t(lazy(lift(AdaptedMeasure::simple(kZZ, {0.5, 0.5})), 0.5), 0.5);
  t.extend_to(7);
  GerlOptions o;
  o.laziness = 0.5;
  const auto est = gerl_R_estimate(return_probabilities(t, 14), o);
  EXPECT_NEAR(est.R_base, kR, 1e-2);
}

TEST(Gerl, SimpleWalkOnZTendsToOne) {
  std::vector<double> p;
  for (int n = 0; n <= 40; ++n)
    p.push_back(n % 2 ? 0.0 : std::exp(std::lgamma(n + 1) - 2 * std::lgamma(n / 2 + 1) - n * std::log(2.0)));
  const auto est = gerl_R_estimate(p);
  EXPECT_EQ(est.period, 2);
  EXPECT_NEAR(est.R, 1.0, 1e-2);
}

TEST(Gerl, PeriodTwoWithoutEvenStepsIsInconclusive) {
  ConvolutionTable t(lift(AdaptedMeasure::simple(kZZ, {0.5, 0.5})));
  t.extend_to(7);
  GerlOptions o;
  o.even_steps = false;
  EXPECT_TRUE(gerl_R_estimate(return_probabilities(t, 14), o).inconclusive);
}

TEST(SpectralReport, F2NonDegenerate) {
  const auto rep = f2().spectral_report();
  EXPECT_TRUE(rep.non_degenerate);
  EXPECT_FALSE(rep.degenerate[0]);
  EXPECT_FALSE(rep.degenerate[1]);
  EXPECT_LT(rep.psi_at_theta_bar, 0.0);
  EXPECT_EQ(rep.derivative_order, 1);
  EXPECT_EQ(rep.status, SpectralReport::Status::ok);
}

TEST(SpectralReport, Z5ZSmallAlphaNonDegenerate) {
  const auto rep = z5z(0.05).spectral_report();
  EXPECT_TRUE(rep.non_degenerate);
  EXPECT_EQ(rep.derivative_order, 1);
}

TEST(SpectralReport, Z5ZLargeAlphaDegenerateConvergent) {
  const auto rep = z5z(0.95).spectral_report();
  EXPECT_FALSE(rep.non_degenerate);
  EXPECT_TRUE(rep.degenerate[0]);
  EXPECT_FALSE(rep.degenerate[1]);
  EXPECT_TRUE(rep.convergent);
  ASSERT_TRUE(rep.degeneracy_rank.has_value());
  EXPECT_EQ(*rep.degeneracy_rank, 5);
  EXPECT_EQ(rep.derivative_order, 2);
}

TEST(HomogeneousDimension, Examples) {
  EXPECT_EQ(homogeneous_dimension({{1, 3}}), 3);
  EXPECT_EQ(homogeneous_dimension({{1, 2}, {2, 1}}), 4);
  EXPECT_EQ(homogeneous_dimension({{1, 3}, {2, 1}}), 5);
}

TEST(TuneAlpha, Z5ZSignChangeBracket) {
  const auto spec = FreeProductSpec::lattice({5, 1});
  const std::vector<LatticeMeasure> f{LatticeMeasure::simple(1, 5), LatticeMeasure::simple(2, 1)};
  const auto rep = tune_alpha(f, spec, 9);
  ASSERT_TRUE(rep.bracket.has_value());
  const auto b = refine_alpha_bracket(f, spec, rep.bracket->first, rep.bracket->second, 0.05);
  EXPECT_LE(b.second - b.first, 0.05);
  EXPECT_LT(psi_at_theta_bar(f, spec, {b.first, 1 - b.first}), 0.0);
  EXPECT_GT(psi_at_theta_bar(f, spec, {b.second, 1 - b.second}), 0.0);
}

TEST(TuneAlpha, LowDimensionalAlwaysNonDegenerate) {
  for (int d : {1, 2}) {
    const auto spec = FreeProductSpec::lattice({d, 1});
    const std::vector<LatticeMeasure> f{LatticeMeasure::simple(1, d), LatticeMeasure::simple(2, 1)};
    const auto rep = tune_alpha(f, spec, 9);
    ASSERT_EQ(rep.grid.size(), 9u);
    for (const auto& p : rep.grid) EXPECT_TRUE(p.non_degenerate) << d << " " << p.alpha[0];
    EXPECT_FALSE(rep.bracket.has_value());
  }
}
