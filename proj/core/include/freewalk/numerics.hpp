#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace freewalk {

// Truncated Taylor series c0 + c1 h + c2 h^2 + c3 h^3 around some base point.
class Jet {
 public:
  static constexpr int kOrder = 3;

  Jet() = default;
  explicit Jet(double value) { c_[0] = value; }
  static Jet variable(double x0) {
    Jet j(x0);
    j.c_[1] = 1.0;
    return j;
  }
  // From f, f', f'', f''' at the base point.
  static Jet from_derivatives(const std::array<double, kOrder + 1>& d);

  double value() const { return c_[0]; }
  double coeff(int m) const { return c_[m]; }
  double& coeff(int m) { return c_[m]; }
  // m-th derivative at the base point.
  double derivative(int m) const;

  Jet operator+(const Jet& o) const;
  Jet operator-(const Jet& o) const;
  Jet operator*(const Jet& o) const;
  Jet operator/(const Jet& o) const;
  Jet operator-() const;
  Jet operator*(double s) const;
  Jet operator+(double s) const;
  Jet operator-(double s) const { return *this + (-s); }
  friend Jet operator*(double s, const Jet& j) { return j * s; }

  Jet reciprocal() const;
  Jet sqrt() const;
  // Local inverse: if *this is f around x0, returns f^{-1} around f(x0) (value x0).
  Jet inverse_function(double x0) const;

  // outer is the Taylor expansion of some g around inner.value(); returns g(inner).
  static Jet compose(const Jet& outer, const Jet& inner);

 private:
  std::array<double, kOrder + 1> c_{};
};

// Neville evaluation at x = 0 of the interpolating polynomial through (xs, ys).
double polynomial_value_at_zero(const std::vector<double>& xs, const std::vector<double>& ys);

struct Extrapolation {
  double value = 0.0;
  double error = 0.0;
  int order = 0;
  std::vector<double> extrapolants;  // one per window end, oldest first
};

// Sliding-window polynomial extrapolation to x = 0: each window holds order+1 consecutive points;
// the reported error is the difference of the last two window results.
Extrapolation extrapolate_to_zero(const std::vector<double>& xs, const std::vector<double>& ys,
                                  int order);

struct LeastSquares {
  std::vector<double> coeffs;
  std::vector<double> std_errors;
  double residual_norm = 0.0;
  double r_squared = 0.0;
};

// Columns of the design matrix are given as functions of the abscissa.
LeastSquares least_squares(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<std::function<double(double)>>& basis);

// Root of an increasing function on [lo, hi]; toms748 to the requested relative tolerance.
// Throws NumericalInconsistency with the bracket values when there is no sign change.
double solve_increasing(const std::function<double(double)>& f, double lo, double hi,
                        double rel_tol = 1e-13, const std::string& what = "root");

// Plain bisection, kept as the reference solver.
double bisect_increasing(const std::function<double(double)>& f, double lo, double hi,
                         double abs_tol = 1e-12);

// Fixed-order pairwise sum.
double pairwise_sum(const double* v, std::size_t n);

}  // namespace freewalk
