#include "freewalk/numerics.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "freewalk/errors.hpp"

namespace freewalk {

Jet Jet::from_derivatives(const std::array<double, kOrder + 1>& d) {
  Jet j;
  double fact = 1.0;
  for (int m = 0; m <= kOrder; ++m) {
    if (m > 0) fact *= m;
    j.c_[m] = d[m] / fact;
  }
  return j;
}

double Jet::derivative(int m) const {
  double fact = 1.0;
  for (int i = 2; i <= m; ++i) fact *= i;
  return c_[m] * fact;
}

Jet Jet::operator+(const Jet& o) const {
  Jet r;
  for (int m = 0; m <= kOrder; ++m) r.c_[m] = c_[m] + o.c_[m];
  return r;
}

Jet Jet::operator-(const Jet& o) const {
  Jet r;
  for (int m = 0; m <= kOrder; ++m) r.c_[m] = c_[m] - o.c_[m];
  return r;
}

Jet Jet::operator-() const {
  Jet r;
  for (int m = 0; m <= kOrder; ++m) r.c_[m] = -c_[m];
  return r;
}

Jet Jet::operator*(const Jet& o) const {
  Jet r;
  for (int m = 0; m <= kOrder; ++m)
    for (int i = 0; i <= m; ++i) r.c_[m] += c_[i] * o.c_[m - i];
  return r;
}

Jet Jet::operator*(double s) const {
  Jet r = *this;
  for (auto& c : r.c_) c *= s;
  return r;
}

Jet Jet::operator+(double s) const {
  Jet r = *this;
  r.c_[0] += s;
  return r;
}

Jet Jet::reciprocal() const {
  if (c_[0] == 0.0) throw DomainError("reciprocal of a jet with zero value");
  Jet r;
  r.c_[0] = 1.0 / c_[0];
  for (int m = 1; m <= kOrder; ++m) {
    double s = 0.0;
    for (int i = 1; i <= m; ++i) s += c_[i] * r.c_[m - i];
    r.c_[m] = -s / c_[0];
  }
  return r;
}

Jet Jet::operator/(const Jet& o) const { return *this * o.reciprocal(); }

Jet Jet::sqrt() const {
  if (!(c_[0] > 0.0)) throw DomainError("square root of a jet with nonpositive value");
  Jet r;
  r.c_[0] = std::sqrt(c_[0]);
  for (int m = 1; m <= kOrder; ++m) {
    double s = c_[m];
    for (int i = 1; i < m; ++i) s -= r.c_[i] * r.c_[m - i];
    r.c_[m] = s / (2.0 * r.c_[0]);
  }
  return r;
}

Jet Jet::inverse_function(double x0) const {
  const double a1 = c_[1], a2 = c_[2], a3 = c_[3];
  if (a1 == 0.0) throw DomainError("local inverse of a jet with vanishing slope");
  Jet r(x0);
  r.c_[1] = 1.0 / a1;
  r.c_[2] = -a2 / (a1 * a1 * a1);
  r.c_[3] = (2.0 * a2 * a2 - a1 * a3) / std::pow(a1, 5);
  return r;
}

Jet Jet::compose(const Jet& outer, const Jet& inner) {
  Jet delta = inner;
  delta.c_[0] = 0.0;
  Jet power(1.0);
  Jet r(outer.c_[0]);
  for (int m = 1; m <= kOrder; ++m) {
    power = power * delta;
    r = r + power * outer.c_[m];
  }
  return r;
}

double polynomial_value_at_zero(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  if (n == 0 || ys.size() != n) throw DomainError("interpolation needs matching nonempty data");
  std::vector<double> p(ys);
  for (std::size_t level = 1; level < n; ++level)
    for (std::size_t i = 0; i + level < n; ++i) {
      const double xi = xs[i], xj = xs[i + level];
      p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
    }
  return p[0];
}

Extrapolation extrapolate_to_zero(const std::vector<double>& xs, const std::vector<double>& ys,
                                  int order) {
  if (xs.size() != ys.size()) throw DomainError("extrapolation data size mismatch");
  if (order < 0 || xs.size() < static_cast<std::size_t>(order + 1))
    throw DomainError(fmt::format("extrapolation of order {} needs {} points, have {}", order,
                                  order + 1, xs.size()));
  Extrapolation e;
  e.order = order;
  const std::size_t w = static_cast<std::size_t>(order) + 1;
  for (std::size_t end = w; end <= xs.size(); ++end) {
    std::vector<double> x(xs.begin() + (end - w), xs.begin() + end);
    std::vector<double> y(ys.begin() + (end - w), ys.begin() + end);
    e.extrapolants.push_back(polynomial_value_at_zero(x, y));
  }
  e.value = e.extrapolants.back();
  e.error = e.extrapolants.size() >= 2
                ? std::abs(e.extrapolants.back() - e.extrapolants[e.extrapolants.size() - 2])
                : std::numeric_limits<double>::infinity();
  return e;
}

LeastSquares least_squares(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<std::function<double(double)>>& basis) {
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto p = static_cast<Eigen::Index>(basis.size());
  if (n != static_cast<Eigen::Index>(y.size()) || n < p)
    throw DomainError(fmt::format("least squares with {} points and {} unknowns", n, p));
  Eigen::MatrixXd a(n, p);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) a(i, j) = basis[j](x[i]);
    b(i) = y[i];
  }
  const auto qr = a.colPivHouseholderQr();
  const Eigen::VectorXd c = qr.solve(b);
  const Eigen::VectorXd res = b - a * c;
  LeastSquares out;
  out.coeffs.assign(c.data(), c.data() + p);
  out.residual_norm = res.norm();
  const double mean = b.mean();
  const double tss = (b.array() - mean).square().sum();
  out.r_squared = tss > 0.0 ? 1.0 - res.squaredNorm() / tss : 1.0;
  out.std_errors.assign(static_cast<std::size_t>(p), std::numeric_limits<double>::infinity());
  if (n > p) {
    const double sigma2 = res.squaredNorm() / static_cast<double>(n - p);
    const Eigen::MatrixXd cov = (a.transpose() * a).inverse() * sigma2;
    for (Eigen::Index j = 0; j < p; ++j) out.std_errors[j] = std::sqrt(std::max(0.0, cov(j, j)));
  }
  return out;
}

double solve_increasing(const std::function<double(double)>& f, double lo, double hi,
                        double rel_tol, const std::string& what) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (flo > 0.0 || fhi < 0.0)
    throw NumericalInconsistency(fmt::format("{}: no sign change on [{:.17g}, {:.17g}] (f = {:.6g}, {:.6g})",
                                             what, lo, hi, flo, fhi));
  const double tol = std::max(rel_tol, 4.0 * std::numeric_limits<double>::epsilon());
  auto done = [tol](double a, double b) { return std::abs(b - a) <= tol * std::max(std::abs(a), std::abs(b)); };
  std::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, done, iters);
  return 0.5 * (a + b);
}

double bisect_increasing(const std::function<double(double)>& f, double lo, double hi, double abs_tol) {
  double flo = f(lo);
  if (flo > 0.0 || f(hi) < 0.0) throw NumericalInconsistency("bisection: no sign change");
  while (hi - lo > abs_tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

}  // namespace freewalk
