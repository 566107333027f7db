#pragma once

#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "freewalk/group.hpp"
#include "freewalk/measures.hpp"
#include "freewalk/product_green.hpp"

namespace freewalk {

struct KernelProfile {
  std::vector<double> abscissa;     // n values or r values
  std::vector<double> values;       // raw ratios
  std::vector<double> extrapolants; // one per window end, aligned with the last entries of values
  double limit = 0.0;
  double error = 0.0;
  int order = 0;
  std::vector<std::string> notes;
};

// P^n(x, y) / P^n(e, y) on n_list, extrapolated to n = inf as a polynomial in 1/n.
KernelProfile h_finite_n(const ConvolutionTable& table, const GroupElement& x, const GroupElement& y,
                         const std::vector<int>& n_list, int order = 4);

// Evenly spaced n_lo..n_hi.
std::vector<int> n_range(int n_lo, int n_hi, int step = 1);

// I^(s)(x, y|r) / I^(s)(e, y|r) as r -> R, with I^(s) = F_s / (s! r^{s-1}) from the analytic jet of
// G, extrapolated in sqrt(R - r) (or 1/log(1/(R - r)) for an even degeneracy rank). Refuses s
// below the critical order of the spectral report.
KernelProfile h_via_sums(const GreenCalculus& g, const GroupElement& x, const GroupElement& y, int s,
                         const std::vector<double>& r_grid, int order = 2);
// r_j = R (1 - 4^{-j}), j = j_lo..j_hi.
std::vector<double> default_r_grid(double R, int j_lo = 3, int j_hi = 10);

enum class HMethod { finite_n, sums };
std::string to_string(HMethod m);
HMethod parse_h_method(const std::string& s);

struct HOptions {
  HMethod method = HMethod::sums;
  std::vector<int> n_list;       // finite_n
  int finite_order = 4;
  int s = 0;                     // sums; 0 takes the spectral report's order
  std::vector<double> r_grid;    // sums; empty uses default_r_grid
  int sums_order = 2;
};

// Ratio-limit kernel H(x, y) by one of the two routes, memoized.
class RatioLimitKernel {
 public:
  RatioLimitKernel(const GreenCalculus* calculus, const ConvolutionTable* table, HOptions options);
  double operator()(const GroupElement& x, const GroupElement& y) const;
  KernelProfile profile(const GroupElement& x, const GroupElement& y) const;
  const HOptions& options() const { return options_; }

 private:
  const GreenCalculus* calculus_;
  const ConvolutionTable* table_;
  HOptions options_;
  int s_ = 1;
  mutable std::mutex mutex_;
  mutable std::unordered_map<GroupElement, std::unordered_map<GroupElement, double, GroupElementHash>,
                             GroupElementHash>
      memo_;
};

// |t u(x) - sum_z mu(x^{-1} z) u(z)|, t = 1/R.
double harmonicity_residual(const std::function<std::optional<double>(const GroupElement&)>& u,
                            const GroupElement& x, const ProductMeasure& mu, double t);

// Eventually periodic normal form: y_n = first n syllables of head . period . period . ...
class RaySpec {
 public:
  RaySpec(GroupElement head, GroupElement period);
  GroupElement at_depth(int n) const;
  const GroupElement& head() const { return head_; }
  const GroupElement& period() const { return period_; }

 private:
  GroupElement head_;
  GroupElement period_;
};

struct RayProfile {
  std::vector<int> depths;
  std::vector<double> ratios;  // H(x, y_n) / K_R(x, y_n)
  double last_deviation = 0.0;
  double max_deviation = 0.0;
  bool monotone = false;       // |ratio - 1| non-increasing along depths
  bool partial = false;
  std::vector<std::string> notes;
};
RayProfile hk_ratio_along_ray(const GreenCalculus& g, const RatioLimitKernel& H, const GroupElement& x,
                              const RaySpec& ray, const std::vector<int>& depths);

using Kernel = std::function<double(const GroupElement&, const GroupElement&)>;

struct MetricConfig {
  std::vector<GroupElement> order;  // phi: order[j] has phi = j + 1
  std::vector<double> bound;        // D_x, aligned with order
  int truncation = 0;               // number of x used
  double safety = 1.1;
  double tail_bound() const;        // sum over phi > T of 2^{1 - phi}
};
// D_x = max(1, safety * max over the calibration set of kernel(x, y)).
MetricConfig calibrate_metric(const FreeProductSpec& spec, int truncation, const Kernel& kernel,
                              const std::vector<GroupElement>& calibration, double safety = 1.1);
// sum_x (|k(x,y) - k(x,y')| + |1_y(x) - 1_y'(x)|) / (2^{phi(x)} D_x) over the truncation set.
double boundary_metric(const GroupElement& y, const GroupElement& y2, const Kernel& kernel,
                       const MetricConfig& config);

struct RadicalScan {
  int ball_radius = 0;
  double tolerance = 0.0;
  std::vector<GroupElement> elements;
  std::vector<double> deviation;       // max_x |H(x, g) - H(x, e)|
  std::vector<GroupElement> candidates;
};
RadicalScan radical_scan(const FreeProductSpec& spec, int ball_radius, const Kernel& H,
                         const std::vector<GroupElement>& test_x, double tolerance);

struct LltFit {
  double exponent = 0.0;        // d / 2, local slopes extrapolated in 1/n
  double exponent_error = 0.0;  // difference of the last two extrapolants
  double exponent_ls = 0.0;     // least-squares slope with 1/n^j corrections
  double exponent_ls_error = 0.0;
  double coefficient = 0.0;     // C beta(x, y) from the least-squares fit
  double R_used = 0.0;
  double residual = 0.0;
  int points = 0;
};
// Local slopes -d log(P^n R^n) / d log n between consecutive nonzero terms, extrapolated to
// n = inf with the given order; alongside, log(P^n R^n) = c - gamma log n + sum_j b_j / n^j.
LltFit llt_fit(const std::vector<int>& n, const std::vector<double>& p, double R, int corrections = 2,
               int richardson_order = 3);
LltFit llt_fit(const ConvolutionTable& table, const GroupElement& x, const GroupElement& y, int n_lo, int n_hi,
               double R, int corrections = 2, int richardson_order = 3);

}  // namespace freewalk
