#pragma once

#include <array>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "freewalk/factor_green.hpp"
#include "freewalk/group.hpp"
#include "freewalk/measures.hpp"
#include "freewalk/numerics.hpp"

namespace freewalk {

struct GreenCalculusOptions {
  // The r-level API describes eps delta_e + (1 - eps) mu. Phi, Psi, theta and zeta always refer
  // to mu itself.
  double laziness = 0.0;
  FactorGreenOptions factor;
  double degeneracy_tol = 1e-6;  // relative, for |zeta_i(R) - R_i|
  double psi_tol = 1e-9;
  double root_tol = 1e-14;
};

struct ComputeRResult {
  double R = 0.0;        // of mu
  double theta = 0.0;
  double green_at_R = 0.0;
  double theta_bar = 0.0;          // may be +inf
  double psi_at_theta_bar = 0.0;   // -1 stands for the limit when theta_bar = inf
  bool interior_root = false;      // Psi vanishes at theta
};

struct SpectralReport {
  enum class Status { ok, borderline };
  double R = 0.0;
  double R_lazy = 0.0;
  double laziness = 0.0;
  double theta = 0.0;
  double green_at_R = 0.0;
  double theta_bar = 0.0;
  double psi_at_theta_bar = 0.0;
  std::vector<double> zeta_at_R;
  std::vector<double> factor_R;   // R_i, = 1 on lattices
  std::vector<double> factor_theta;
  std::vector<bool> degenerate;
  bool non_degenerate = true;
  bool convergent = false;
  std::optional<int> degeneracy_rank;
  int derivative_order = 1;
  Status status = Status::ok;
  bool experimental = false;  // more than two factors
  std::vector<std::string> notes;
  double degeneracy_tol = 0.0;
  double psi_tol = 0.0;
  double max_zeta_gap_check = 0.0;  // dual-path: largest disagreement indicator
};
std::string to_string(SpectralReport::Status s);

// Green function of an adapted measure on a free product of lattices via factor Green functions.
class GreenCalculus {
 public:
  explicit GreenCalculus(AdaptedMeasure mu, GreenCalculusOptions options = {});
  // Reuses factor evaluators (one per factor, matching the measure's factor measures).
  GreenCalculus(AdaptedMeasure mu, std::vector<std::shared_ptr<const FactorGreenEvaluator>> factors,
                GreenCalculusOptions options = {});
  ~GreenCalculus();

  const AdaptedMeasure& measure() const { return mu_; }
  const FreeProductSpec& spec() const { return mu_.spec(); }
  const GreenCalculusOptions& options() const { return options_; }
  double laziness() const { return options_.laziness; }
  int size() const { return mu_.size(); }
  const FactorGreenEvaluator& factor(int i) const { return *factors_.at(i - 1); }

  double theta_bar() const;
  // Phi(s) = sum_i Phi_i(alpha_i s) - (k - 1), Psi likewise, 0 <= s <= theta_bar.
  double phi(double s) const;
  double psi(double s) const;

  const ComputeRResult& compute_R() const;
  // Spectral radius inverse of mu and of the lazy measure.
  double R_base() const { return compute_R().R; }
  double R() const;
  // Lazy map r -> r' = (1 - eps) r / (1 - eps r).
  double base_argument(double r) const;

  // t(r) solving t / Phi(t) = r, r in [0, R_base].
  double t_of(double r_base) const;
  // zeta_i at base level, r in [0, R_base].
  double zeta(int i, double r_base) const;

  // G(x, y|r) for the lazy measure, 0 <= r <= R.
  double green(const GroupElement& x, const GroupElement& y, double r) const;
  double green(const GroupElement& z, double r) const;  // G(e, z|r)
  // Taylor jet of r -> G(e, z|r) at r < R (derivatives up to 3).
  Jet green_jet(const GroupElement& z, double r) const;
  double martin_kernel(const GroupElement& x, const GroupElement& y, double r) const;

  SpectralReport spectral_report() const;

 private:
  struct Level;  // per-r data
  std::shared_ptr<const Level> level(double r_base, int order) const;
  double base_green(const GroupElement& z, const Level& lv) const;

  AdaptedMeasure mu_;
  GreenCalculusOptions options_;
  std::vector<std::shared_ptr<const FactorGreenEvaluator>> factors_;
  mutable std::mutex mutex_;
  mutable std::optional<ComputeRResult> R_;
  mutable std::vector<std::pair<std::pair<double, int>, std::shared_ptr<const Level>>> levels_;
};

// F_1 = d/dr (r G), F_k = d/dr (r^2 F_{k-1}).
struct FkValue {
  double value = 0.0;
  double error = 0.0;
};
// Centered 5-point finite differences of G(x, y|.) at each r, step compared against its half.
std::vector<FkValue> F_k(const GreenCalculus& g, int k, const GroupElement& x, const GroupElement& y,
                         const std::vector<double>& r_grid);
// Same quantity from the analytic jet.
double F_k_exact(const GreenCalculus& g, int k, const GroupElement& z, double r);

struct IteratedSum {
  double value = 0.0;
  double last_increment = 0.0;         // contribution of the outermost shell (or radius step)
  std::vector<double> by_radius;       // partial values for radius 0..ball_radius (s = 1)
  std::size_t ball_size = 0;
  bool truncated = false;              // budget hit; value is partial
};
// I^(s)(x, y|r) = sum over x_1..x_s in the ball of G(x, x_1) G(x_1, x_2) ... G(x_s, y).
IteratedSum iterated_sum(const GreenCalculus& g, int s, const GroupElement& x, const GroupElement& y,
                         double r, int ball_radius, const BallOptions& ball = {});

struct GerlEstimate {
  double R = 0.0;          // for the measure the returns come from
  double R_base = 0.0;     // after removing laziness
  double error = 0.0;
  int period = 1;
  bool inconclusive = false;
  std::string note;
};
struct GerlOptions {
  double laziness = 0.0;
  bool even_steps = true;  // use P^{2m} for period-2 walks
  int order = 2;
};
// Ratio estimate of R from return probabilities P^n(e, e), n = 0..n_max.
GerlEstimate gerl_R_estimate(const std::vector<double>& returns, const GerlOptions& options = {});
std::vector<double> return_probabilities(const ConvolutionTable& table, int n_max);

struct SeriesGreen {
  double value = 0.0;       // truncated sum plus modelled tail
  double truncated = 0.0;   // sum over n <= N
  double tail = 0.0;        // modelled tail
  double tail_uncertainty = 0.0;
  double geometric_bound = 0.0;
  int terms = 0;
};
// sum_n w(n) P^n(e, g) r^n with w = 1 (weight 0) or w = n + 1 (weight 1), N from the table reach.
// Tail: log(P^n R^n n^{3/2}) = a + b/n + c/n^2 fitted per parity class on the last three terms.
SeriesGreen direct_series_green(const ConvolutionTable& table, const GroupElement& g, double r, double R,
                                int n_max, int weight = 0);

// Sum k * rank(Gamma_k / Gamma_{k+1}).
int homogeneous_dimension(const std::vector<std::pair<int, int>>& ranks);

struct AlphaPoint {
  std::vector<double> alpha;
  double psi_at_theta_bar = 0.0;
  bool non_degenerate = false;
};
struct TuneReport {
  std::vector<AlphaPoint> grid;
  std::vector<double> best;
  double best_psi = 0.0;
  bool achieved = false;
  std::optional<std::pair<double, double>> bracket;  // alpha_1 sign-change interval (2 factors)
};
// alpha on an interior simplex grid with `steps` points per edge (2 factors: alpha_1 in
// [lo, hi] evenly).
TuneReport tune_alpha(const std::vector<LatticeMeasure>& factors, const FreeProductSpec& spec, int steps,
                      double lo = 0.05, double hi = 0.95, const FactorGreenOptions& fo = {});
// Refines a two-factor sign-change bracket by bisection down to `width`.
std::pair<double, double> refine_alpha_bracket(const std::vector<LatticeMeasure>& factors,
                                               const FreeProductSpec& spec, double lo, double hi,
                                               double width, const FactorGreenOptions& fo = {});
double psi_at_theta_bar(const std::vector<LatticeMeasure>& factors, const FreeProductSpec& spec,
                        const std::vector<double>& alpha, const FactorGreenOptions& fo = {});

}  // namespace freewalk
