#include "freewalk/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "freewalk/errors.hpp"
#include "freewalk/numerics.hpp"

namespace freewalk {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}
}  // namespace

std::vector<int> n_range(int n_lo, int n_hi, int step) {
  if (step < 1 || n_lo > n_hi) throw DomainError("empty n range");
  std::vector<int> out;
  for (int n = n_lo; n <= n_hi; n += step) out.push_back(n);
  return out;
}

KernelProfile h_finite_n(const ConvolutionTable& table, const GroupElement& x, const GroupElement& y,
                         const std::vector<int>& n_list, int order) {
  KernelProfile p;
  p.order = order;
  const GroupElement z = multiply(inverse(x), y);
  for (int n : n_list) {
    if (n > table.reach()) throw DomainError(fmt::format("n = {} beyond the table reach {}", n, table.reach()));
    const double den = table.transition(y, n);
    if (!(den > 0.0)) {
      p.notes.push_back(fmt::format("n = {} skipped: P^n(e, y) = 0", n));
      continue;
    }
    p.abscissa.push_back(n);
    p.values.push_back(x.is_identity() ? 1.0 : table.transition(z, n) / den);
  }
  if (p.values.empty()) throw DomainError("no usable n in the list");
  if (x.is_identity()) {
    p.extrapolants.assign(p.values.size(), 1.0);
    p.limit = 1.0;
    return p;
  }
  std::vector<double> inv;
  for (double n : p.abscissa) inv.push_back(1.0 / n);
  const int ord = std::min<int>(order, static_cast<int>(inv.size()) - 1);
  if (ord < order) p.notes.push_back(fmt::format("order lowered to {} for lack of points", ord));
  const auto ex = extrapolate_to_zero(inv, p.values, ord);
  p.order = ord;
  p.extrapolants = ex.extrapolants;
  p.limit = ex.value;
  p.error = ex.error;
  return p;
}

std::vector<double> default_r_grid(double R, int j_lo, int j_hi) {
  std::vector<double> out;
  for (int j = j_lo; j <= j_hi; ++j) out.push_back(R * (1.0 - std::pow(4.0, -j)));
  return out;
}

KernelProfile h_via_sums(const GreenCalculus& g, const GroupElement& x, const GroupElement& y, int s,
                         const std::vector<double>& r_grid, int order) {
  const auto rep = g.spectral_report();
  if (rep.status == SpectralReport::Status::borderline)
    throw DomainError("spectral classification is borderline; the iterated-sum route is not covered");
  if (s < rep.derivative_order)
    throw DomainError(fmt::format(
        "s = {} is below the critical order {}: the limit of I^(s) ratios is not R^-1-harmonic here", s,
        rep.derivative_order));
  if (s > 3) throw DomainError("iterated sums are available for s <= 3");
  KernelProfile p;
  if (s > rep.derivative_order) p.notes.push_back(fmt::format("s = {} above the critical order {}", s, rep.derivative_order));
  const bool log_scale = !rep.non_degenerate && rep.degeneracy_rank && *rep.degeneracy_rank % 2 == 0;
  const double R = g.R();
  const GroupElement z = multiply(inverse(x), y);
  std::vector<double> xs;
  for (double r : r_grid) {
    if (!(r > 0.0 && r < R)) throw DomainError(fmt::format("r = {} outside (0, R)", r));
    p.abscissa.push_back(r);
    if (x.is_identity()) {
      p.values.push_back(1.0);
    } else {
      // the factor s! r^{s-1} cancels in the ratio; kept for the definition
      const double c = factorial(s) * std::pow(r, s - 1);
      const double num = F_k_exact(g, s, z, r) / c;
      const double den = F_k_exact(g, s, y, r) / c;
      p.values.push_back(num / den);
    }
    xs.push_back(log_scale ? 1.0 / std::log(1.0 / (R - r)) : std::sqrt(R - r));
  }
  if (x.is_identity()) {
    p.extrapolants.assign(p.values.size(), 1.0);
    p.limit = 1.0;
    return p;
  }
  const int ord = std::min<int>(order, static_cast<int>(xs.size()) - 1);
  const auto ex = extrapolate_to_zero(xs, p.values, ord);
  p.order = ord;
  p.extrapolants = ex.extrapolants;
  p.limit = ex.value;
  p.error = ex.error;
  p.notes.push_back(log_scale ? "extrapolated in 1/log(1/(R-r))" : "extrapolated in sqrt(R-r)");
  return p;
}

std::string to_string(HMethod m) { return m == HMethod::sums ? "sums" : "finite-n"; }

HMethod parse_h_method(const std::string& s) {
  if (s == "sums") return HMethod::sums;
  if (s == "finite-n" || s == "finite_n") return HMethod::finite_n;
  throw ConfigError(fmt::format("unknown ratio-limit method '{}'", s));
}

RatioLimitKernel::RatioLimitKernel(const GreenCalculus* calculus, const ConvolutionTable* table, HOptions options)
    : calculus_(calculus), table_(table), options_(std::move(options)) {
  if (options_.method == HMethod::sums) {
    if (!calculus_) throw ConfigError("the iterated-sum route needs a Green calculus");
    s_ = options_.s > 0 ? options_.s : calculus_->spectral_report().derivative_order;
    if (options_.r_grid.empty()) options_.r_grid = default_r_grid(calculus_->R());
  } else {
    if (!table_) throw ConfigError("the finite-n route needs a convolution table");
    if (options_.n_list.empty()) options_.n_list = n_range(std::max(4, table_->reach() - 10), table_->reach());
  }
}

KernelProfile RatioLimitKernel::profile(const GroupElement& x, const GroupElement& y) const {
  if (options_.method == HMethod::sums) return h_via_sums(*calculus_, x, y, s_, options_.r_grid, options_.sums_order);
  return h_finite_n(*table_, x, y, options_.n_list, options_.finite_order);
}

double RatioLimitKernel::operator()(const GroupElement& x, const GroupElement& y) const {
  if (x.is_identity()) return 1.0;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto& row = memo_[x];
    auto it = row.find(y);
    if (it != row.end()) return it->second;
  }
  const double v = profile(x, y).limit;
  std::lock_guard<std::mutex> lock(mutex_);
  memo_[x].emplace(y, v);
  return v;
}

double harmonicity_residual(const std::function<std::optional<double>(const GroupElement&)>& u,
                            const GroupElement& x, const ProductMeasure& mu, double t) {
  const auto ux = u(x);
  if (!ux) throw DomainError(fmt::format("u undefined at {}", to_string(x)));
  std::vector<double> terms;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const GroupElement z = multiply(x, mu.element(i));
    const auto uz = u(z);
    if (!uz) throw DomainError(fmt::format("u undefined at neighbour {}", to_string(z)));
    terms.push_back(mu.mass(i) * *uz);
  }
  return std::abs(t * *ux - pairwise_sum(terms.data(), terms.size()));
}

RaySpec::RaySpec(GroupElement head, GroupElement period) : head_(std::move(head)), period_(std::move(period)) {
  if (period_.is_identity()) throw DomainError("ray period must be nonempty");
  const int m = period_.syllable_count();
  if (period_.syllable_at(0).factor == period_.syllable_at(m - 1).factor)
    throw DomainError("ray period must start and end in different factors");
  if (!head_.is_identity() &&
      head_.syllable_at(head_.syllable_count() - 1).factor == period_.syllable_at(0).factor)
    throw DomainError("ray head must end in a different factor than the period starts");
}

GroupElement RaySpec::at_depth(int n) const {
  if (n < 0) throw DomainError("negative ray depth");
  GroupElement y;
  int left = n;
  for (int j = 0; j < head_.syllable_count() && left > 0; ++j, --left) {
    const auto s = head_.syllable_at(j);
    y.append(s.factor, s.vector);
  }
  while (left > 0)
    for (int j = 0; j < period_.syllable_count() && left > 0; ++j, --left) {
      const auto s = period_.syllable_at(j);
      y.append(s.factor, s.vector);
    }
  return y;
}

RayProfile hk_ratio_along_ray(const GreenCalculus& g, const RatioLimitKernel& H, const GroupElement& x,
                              const RaySpec& ray, const std::vector<int>& depths) {
  RayProfile out;
  const double R = g.R();
  for (int n : depths) {
    const GroupElement y = ray.at_depth(n);
    double ratio;
    try {
      ratio = x.is_identity() ? 1.0 : H(x, y) / g.martin_kernel(x, y, R);
    } catch (const BudgetExceeded& e) {
      out.partial = true;
      out.notes.push_back(fmt::format("depth {}: {}", n, e.what()));
      break;
    }
    out.depths.push_back(n);
    out.ratios.push_back(ratio);
  }
  out.monotone = true;
  for (std::size_t j = 0; j < out.ratios.size(); ++j) {
    const double dev = std::abs(out.ratios[j] - 1.0);
    out.max_deviation = std::max(out.max_deviation, dev);
    out.last_deviation = dev;
    if (j > 0 && dev > std::abs(out.ratios[j - 1] - 1.0) + 1e-12) out.monotone = false;
  }
  return out;
}

double MetricConfig::tail_bound() const { return std::pow(2.0, 1.0 - truncation); }

MetricConfig calibrate_metric(const FreeProductSpec& spec, int truncation, const Kernel& kernel,
                              const std::vector<GroupElement>& calibration, double safety) {
  if (truncation < 1) throw DomainError("metric truncation must be positive");
  MetricConfig c;
  c.truncation = truncation;
  c.safety = safety;
  for (int radius = 0; static_cast<int>(c.order.size()) < truncation; ++radius) c.order = enumerate_ball(spec, radius);
  c.order.resize(truncation);
  for (const auto& x : c.order) {
    double mx = 0.0;
    for (const auto& y : calibration) mx = std::max(mx, std::abs(kernel(x, y)));
    c.bound.push_back(std::max(1.0, safety * mx));
  }
  return c;
}

double boundary_metric(const GroupElement& y, const GroupElement& y2, const Kernel& kernel, const MetricConfig& config) {
  if (y == y2) return 0.0;
  std::vector<double> terms;
  for (int j = 0; j < config.truncation; ++j) {
    const auto& x = config.order[j];
    const double ind = (x == y ? 1.0 : 0.0) - (x == y2 ? 1.0 : 0.0);
    const double t = (std::abs(kernel(x, y) - kernel(x, y2)) + std::abs(ind)) / (std::pow(2.0, j + 1) * config.bound[j]);
    terms.push_back(t);
  }
  return pairwise_sum(terms.data(), terms.size());
}

RadicalScan radical_scan(const FreeProductSpec& spec, int ball_radius, const Kernel& H,
                         const std::vector<GroupElement>& test_x, double tolerance) {
  RadicalScan out;
  out.ball_radius = ball_radius;
  out.tolerance = tolerance;
  out.elements = enumerate_ball(spec, ball_radius);
  const GroupElement e;
  for (const auto& g : out.elements) {
    double dev = 0.0;
    if (!g.is_identity())
      for (const auto& x : test_x) dev = std::max(dev, std::abs(H(x, g) - H(x, e)));
    out.deviation.push_back(dev);
    if (dev < tolerance) out.candidates.push_back(g);
  }
  return out;
}

LltFit llt_fit(const std::vector<int>& n, const std::vector<double>& p, double R, int corrections,
               int richardson_order) {
  if (n.size() != p.size()) throw DomainError("llt_fit: size mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < n.size(); ++i)
    if (p[i] > 0.0 && n[i] > 0) {
      xs.push_back(n[i]);
      ys.push_back(std::log(p[i]) + n[i] * std::log(R));
    }
  std::vector<std::function<double(double)>> basis = {[](double) { return 1.0; },
                                                       [](double m) { return -std::log(m); }};
  for (int j = 1; j <= corrections; ++j) basis.push_back([j](double m) { return std::pow(m, -j); });
  if (xs.size() < basis.size()) throw DomainError("llt_fit: range too short for the requested corrections");
  const auto ls = least_squares(xs, ys, basis);
  LltFit out;
  out.exponent_ls = ls.coeffs[1];
  out.exponent_ls_error = xs.size() == basis.size() ? kInf : ls.std_errors[1];
  out.coefficient = std::exp(ls.coeffs[0]);
  out.R_used = R;
  out.residual = ls.residual_norm;
  out.points = static_cast<int>(xs.size());
  std::vector<double> mid, slope;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    mid.push_back(2.0 / (xs[i] + xs[i + 1]));
    slope.push_back(-(ys[i + 1] - ys[i]) / (std::log(xs[i + 1]) - std::log(xs[i])));
  }
  const int ord = std::min<int>(richardson_order, static_cast<int>(mid.size()) - 2);
  if (ord < 0) throw DomainError("llt_fit: range too short for local slopes");
  const auto ex = extrapolate_to_zero(mid, slope, ord);
  out.exponent = ex.value;
  out.exponent_error = ex.error;
  return out;
}

LltFit llt_fit(const ConvolutionTable& table, const GroupElement& x, const GroupElement& y, int n_lo, int n_hi,
               double R, int corrections, int richardson_order) {
  if (n_hi > table.reach()) throw DomainError(fmt::format("n = {} beyond the table reach {}", n_hi, table.reach()));
  std::vector<int> n;
  std::vector<double> p;
  for (int m = n_lo; m <= n_hi; ++m) {
    n.push_back(m);
    p.push_back(table.transition(x, y, m));
  }
  return llt_fit(n, p, R, corrections, richardson_order);
}

}  // namespace freewalk
