#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <numbers>

#include "freewalk/errors.hpp"
#include "freewalk/factor_green.hpp"

using namespace freewalk;

namespace {

// Simple cubic lattice: G(0|1) as a product of Gamma values.
double watson_closed_form() {
  return std::sqrt(6.0) / (32.0 * std::pow(std::numbers::pi, 3)) * std::tgamma(1.0 / 24) * std::tgamma(5.0 / 24) *
         std::tgamma(7.0 / 24) * std::tgamma(11.0 / 24);
}

// Same value from int_0^inf e^{-t} I_0(t/3)^3 dt, with the large-t tail from the Bessel asymptotics.
double watson_bessel_integral() {
  using boost::math::cyl_bessel_i;
  using boost::math::quadrature::gauss_kronrod;
  auto f = [](double t) {
    const double i0 = cyl_bessel_i(0, t / 3.0);
    return std::exp(-t) * i0 * i0 * i0;
  };
  const double T = 600.0;
  double body = 0.0;
  const double cuts[] = {0.0, 10.0, 50.0, 200.0, T};
  for (int j = 0; j < 4; ++j) body += gauss_kronrod<double, 61>::integrate(f, cuts[j], cuts[j + 1], 12, 1e-14);
  const double c = std::pow(2.0 * std::numbers::pi / 3.0, -1.5);
  const double tail =
      c * (2.0 / std::sqrt(T) + 9.0 / 8.0 * (2.0 / 3.0) * std::pow(T, -1.5) + 297.0 / 128.0 * 0.4 * std::pow(T, -2.5));
  return body + tail;
}

const LatticeMeasure kZ = LatticeMeasure::simple(1, 1);
const LatticeMeasure kZ2 = LatticeMeasure::simple(1, 2);
const LatticeMeasure kZ3 = LatticeMeasure::simple(1, 3);
const LatticeMeasure kZ5 = LatticeMeasure::simple(1, 5);

}  // namespace

TEST(WatsonOracle, TwoIndependentFormsAgree) {
  EXPECT_NEAR(watson_closed_form(), 1.516386059151978, 1e-14);
  EXPECT_NEAR(watson_bessel_integral(), watson_closed_form(), 1e-8);
}

TEST(FactorGreen, SimpleWalkOnZClosedForm) {
  const FactorGreenEvaluator ev(kZ);
  for (double t : {0.1, 0.5, 0.9, 0.99}) {
    EXPECT_NEAR(ev.green({0}, t).value, 1.0 / std::sqrt(1.0 - t * t), 1e-12);
    // G(g|t) = G(0|t) * ((1 - sqrt(1 - t^2)) / t)^|g|
    const double q = (1.0 - std::sqrt(1.0 - t * t)) / t;
    EXPECT_NEAR(ev.green({3}, t).value, std::pow(q, 3) / std::sqrt(1.0 - t * t), 1e-12);
  }
  EXPECT_NEAR(ev.green({0}, 0.5).value, 1.1547005383792515, 1e-12);
}

TEST(FactorGreen, DerivativeOnZClosedForm) {
  const FactorGreenEvaluator ev(kZ);
  EXPECT_NEAR(ev.derivative({0}, 0.5, 1).value, 0.5 * std::pow(0.75, -1.5), 1e-11);
  EXPECT_NEAR(ev.derivative({0}, 0.5, 1).value, 0.7698003589195010, 1e-11);
}

TEST(FactorGreen, AtZeroOnlyFirstTerm) {
  for (const auto* m : {&kZ, &kZ3, &kZ5}) {
    const FactorGreenEvaluator ev(*m);
    std::vector<std::int32_t> origin(m->rank(), 0), g(m->rank(), 0);
    g[0] = 1;
    EXPECT_DOUBLE_EQ(ev.green(origin, 0.0).value, 1.0);
    EXPECT_DOUBLE_EQ(ev.green(g, 0.0).value, 0.0);
  }
}

TEST(FactorGreen, Z3AtOneMatchesWatson) {
  const FactorGreenEvaluator ev(kZ3);
  const auto v = ev.green({0, 0, 0}, 1.0);
  EXPECT_FALSE(v.divergent);
  EXPECT_NEAR(v.value, watson_closed_form(), 1e-8);
  EXPECT_LT(v.error, 1e-7);
}

TEST(FactorGreen, Z3GridRouteWithinRefinementTolerance) {
  FactorGreenOptions o;
  o.mode = QuadratureMode::grid;
  const FactorGreenEvaluator ev(kZ3, o);
  const auto v = ev.green({0, 0, 0}, 1.0);
  EXPECT_NEAR(v.value, watson_closed_form(), 5e-5);
  EXPECT_LT(v.error, 5e-5);
}

TEST(FactorGreen, RoutesAgreeInside) {
  const std::vector<std::int32_t> g{1, 0, 0};
  FactorGreenOptions series, laplace, grid;
  series.mode = QuadratureMode::series;
  laplace.mode = QuadratureMode::laplace;
  grid.mode = QuadratureMode::grid;
  const FactorGreenEvaluator a(kZ3, series), b(kZ3, laplace), c(kZ3, grid);
  for (int s = 0; s <= 1; ++s) {
    const double va = a.derivative(g, 0.7, s).value;
    EXPECT_NEAR(b.derivative(g, 0.7, s).value, va, 1e-9 * va);
    EXPECT_NEAR(c.derivative(g, 0.7, s).value, va, 1e-7 * va);
  }
}

TEST(FactorGreen, Z5FirstDerivativeFiniteSecondDivergent) {
  const FactorGreenEvaluator ev(kZ5);
  const std::vector<std::int32_t> o(5, 0);
  const auto d1 = ev.derivative(o, 1.0, 1);
  EXPECT_FALSE(d1.divergent);
  EXPECT_NEAR(d1.value, 0.7786333155, 1e-7);
  EXPECT_TRUE(ev.derivative(o, 1.0, 2).divergent);
  EXPECT_TRUE(ev.finite_at_one(1));
  EXPECT_FALSE(ev.finite_at_one(2));
}

TEST(FactorGreen, Z5GridAndLaplaceAgreeAtOne) {
  FactorGreenOptions grid;
  grid.mode = QuadratureMode::grid;
  const FactorGreenEvaluator a(kZ5), b(kZ5, grid);
  const std::vector<std::int32_t> o(5, 0);
  const auto va = a.green(o, 1.0), vb = b.green(o, 1.0);
  EXPECT_NEAR(va.value, 1.15630812484, 1e-9);
  EXPECT_NEAR(vb.value, va.value, std::max(5.0 * vb.error, 1e-6));
}

TEST(FactorGreen, BeyondRadiusRejected) {
  const FactorGreenEvaluator ev(kZ3);
  EXPECT_THROW(ev.green({0, 0, 0}, 1.01), DomainError);
}

TEST(FactorTheta, RecurrentAndTransient) {
  EXPECT_TRUE(std::isinf(FactorGreenEvaluator(kZ).theta()));
  EXPECT_TRUE(std::isinf(FactorGreenEvaluator(kZ2).theta()));
  EXPECT_NEAR(FactorGreenEvaluator(kZ3).theta(), watson_closed_form(), 1e-8);
}

TEST(FactorPhi, ClosedFormInversionOnZ) {
  const FactorGreenEvaluator ev(kZ);
  EXPECT_NEAR(ev.rho(std::sqrt(3.0)), std::sqrt(3.0) / 2.0, 1e-12);
  EXPECT_NEAR(ev.phi(std::sqrt(3.0)), 2.0, 1e-11);
  EXPECT_NEAR(ev.rho(0.75), 0.6, 1e-12);
  EXPECT_NEAR(ev.phi(0.75), 1.25, 1e-12);
  EXPECT_NEAR(ev.phi(1e-9), 1.0, 1e-8);
}

TEST(FactorPsi, ClosedFormOnZ) {
  const FactorGreenEvaluator ev(kZ);
  EXPECT_NEAR(ev.psi(std::sqrt(3.0)), 0.5, 1e-10);
  EXPECT_NEAR(ev.psi(1e-9), 1.0, 1e-8);
}

TEST(FactorPsi, Z3VanishesAtTheta) {
  const FactorGreenEvaluator ev(kZ3);
  const double th = ev.theta();
  EXPECT_GE(ev.psi(th), 0.0);
  EXPECT_LT(ev.psi(th), 1e-6);
  // and is positive just below
  EXPECT_GT(ev.psi(0.99 * th), 0.0);
}

TEST(TorusQuadrature, WeightsSumToOne) {
  for (const auto* m : {&kZ, &kZ3}) {
    const TorusQuadrature q(*m, 16, 1'000'000);
    EXPECT_NEAR(q.integral_of_one(), 1.0, 1e-14);
  }
}
