#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "freewalk/measures.hpp"

namespace freewalk {

// Value with an error estimate. `divergent` marks parameter combinations where the defining
// integral is infinite (value is then +inf).
struct GreenValue {
  double value = 0.0;
  double error = 0.0;
  bool divergent = false;
};

enum class QuadratureMode { automatic, laplace, grid, series };
std::string to_string(QuadratureMode m);
QuadratureMode parse_quadrature_mode(const std::string& s);

struct FactorGreenOptions {
  QuadratureMode mode = QuadratureMode::automatic;
  // Tensor grid: nodes per axis (0 picks 64 for d <= 3, 32 for d = 4, 16 beyond), one doubling for the
  // error estimate, refusal above max_grid_points.
  int grid_nodes = 0;
  bool grid_refine = true;
  std::size_t max_grid_points = 40'000'000;
  // Laplace route: step in log w, lower end, table cut-off.
  double laplace_step = 0.125;
  double laplace_log_w_min = -40.0;
  double laplace_w_max = 1e7;
  int max_coordinate = 24;
  // Series route.
  int series_terms = 200;
  std::size_t series_budget = 200'000'000;
};

// Midpoint tensor grid on the torus [-pi, pi)^d, nodes offset by half a step so k = 0 is never a
// node. Measures invariant under coordinate reflections are folded onto the positive orthant.
class TorusQuadrature {
 public:
  TorusQuadrature(const LatticeMeasure& m, int nodes_per_axis, std::size_t max_points);

  int dimension() const { return d_; }
  int nodes_per_axis() const { return m_; }
  bool folded() const { return folded_; }
  std::size_t points() const { return points_; }

  // (2 pi)^{-d} int cos(k.g) s! muhat^s / (1 - t muhat)^{s+1} dk. With subtract = true the
  // quadratic singular model is removed on the grid and its exact integral added back.
  double integrate(const std::vector<std::int32_t>& g, double t, int s, bool subtract) const;
  // Sum of the weights; equals 1.
  double integral_of_one() const;

 private:
  double muhat_at(std::size_t flat) const;
  void node(std::size_t flat, double* k) const;

  const LatticeMeasure* measure_;
  int d_;
  int m_;
  bool folded_;
  std::size_t points_;
  std::vector<double> axis_nodes_;
  std::vector<double> muhat_;  // cached when small enough
  std::vector<double> cov_;
  std::vector<double> cov_inv_;
  double det_cov_ = 1.0;
  double cutoff_radius_ = 1.0;
};

// Exact singular-model integral (2 pi)^{-d} int s! q(k)^{-(s+1)} chi dk used by the grid route.
double singular_model_integral(int d, int s, double det_cov, double cutoff_radius);

// G_i(g|t) = sum_n mu_i^{*n}(g) t^n and its t-derivatives on one lattice factor, R_i = 1.
class FactorGreenEvaluator {
 public:
  explicit FactorGreenEvaluator(LatticeMeasure m, FactorGreenOptions options = {});
  ~FactorGreenEvaluator();

  const LatticeMeasure& measure() const { return measure_; }
  int dimension() const { return measure_.rank(); }
  const FactorGreenOptions& options() const { return options_; }
  double spectral_radius_inverse() const { return 1.0; }

  GreenValue green(const std::vector<std::int32_t>& g, double t) const { return derivative(g, t, 0); }
  // s-th t-derivative, s <= 3.
  GreenValue derivative(const std::vector<std::int32_t>& g, double t, int s) const;
  // Derivatives 0..order at t in one pass (cached).
  std::array<GreenValue, 4> derivatives(const std::vector<std::int32_t>& g, double t, int order) const;
  // Same with an explicit route.
  std::array<GreenValue, 4> derivatives_with(QuadratureMode mode, const std::vector<std::int32_t>& g,
                                             double t, int order) const;

  // The s-th derivative is finite at t = 1 iff d > 2(s + 1).
  bool finite_at_one(int s) const { return dimension() > 2 * (s + 1); }
  QuadratureMode resolve(QuadratureMode requested, double t) const;

  // theta_i = G_i(0|1); +inf for d <= 2.
  double theta() const;
  // Inverse of rho -> rho G_i(0|rho) on [0, 1].
  double rho(double u) const;
  double phi(double u) const;
  double psi(double u) const;

 private:
  struct Laplace;
  struct Series;
  std::array<GreenValue, 4> laplace(const std::vector<std::int32_t>& g, double t, int order) const;
  std::array<GreenValue, 4> grid(const std::vector<std::int32_t>& g, double t, int order) const;
  std::array<GreenValue, 4> series(const std::vector<std::int32_t>& g, double t, int order) const;
  const Laplace& laplace_tables(int max_coord) const;
  const Series& series_tables() const;
  const TorusQuadrature& grid_at(int nodes) const;

  LatticeMeasure measure_;
  FactorGreenOptions options_;
  mutable std::mutex mutex_;
  mutable std::unique_ptr<Laplace> laplace_;
  mutable std::unique_ptr<Series> series_;
  mutable std::map<int, std::unique_ptr<TorusQuadrature>> grids_;
  mutable std::map<std::pair<std::vector<std::int32_t>, std::pair<double, int>>, std::array<GreenValue, 4>> cache_;
  mutable double theta_ = -1.0;
};

}  // namespace freewalk
