#include "freewalk/product_green.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <Eigen/Dense>
#include <limits>

#include "freewalk/errors.hpp"

namespace freewalk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Evaluators = std::vector<std::shared_ptr<const FactorGreenEvaluator>>;

std::vector<std::int32_t> origin(const FactorGreenEvaluator& f) {
  return std::vector<std::int32_t>(f.dimension(), 0);
}

double theta_bar_of(const Evaluators& f, const std::vector<double>& alpha) {
  double tb = kInf;
  for (std::size_t i = 0; i < f.size(); ++i) tb = std::min(tb, f[i]->theta() / alpha[i]);
  return tb;
}

double phi_of(const Evaluators& f, const std::vector<double>& alpha, double s) {
  double v = -static_cast<double>(f.size() - 1);
  for (std::size_t i = 0; i < f.size(); ++i) v += f[i]->phi(alpha[i] * s);
  return v;
}

double psi_of(const Evaluators& f, const std::vector<double>& alpha, double s) {
  double v = -static_cast<double>(f.size() - 1);
  for (std::size_t i = 0; i < f.size(); ++i) v += f[i]->psi(alpha[i] * s);
  return v;
}

// Psi(theta_bar), or its limit -(k - 1) when every factor is recurrent.
double psi_bar_of(const Evaluators& f, const std::vector<double>& alpha) {
  const double tb = theta_bar_of(f, alpha);
  if (!std::isfinite(tb)) return -static_cast<double>(f.size() - 1);
  return psi_of(f, alpha, tb);
}

Jet jet_of(const std::array<GreenValue, 4>& d, const std::string& what) {
  std::array<double, 4> v{};
  for (int m = 0; m < 4; ++m) {
    if (d[m].divergent) throw DomainError(fmt::format("{}: derivative {} diverges", what, m));
    v[m] = d[m].value;
  }
  return Jet::from_derivatives(v);
}

Evaluators build_evaluators(const std::vector<LatticeMeasure>& measures, const FactorGreenOptions& fo) {
  Evaluators out;
  for (const auto& m : measures) out.push_back(std::make_shared<const FactorGreenEvaluator>(m, fo));
  return out;
}

}  // namespace

std::string to_string(SpectralReport::Status s) { return s == SpectralReport::Status::ok ? "ok" : "borderline"; }

struct GreenCalculus::Level {
  double r = 0.0;  // base argument
  int order = 0;
  double t = 0.0;
  double green_ee = 0.0;
  std::vector<double> zeta;
  std::vector<double> factor_ee;  // G_i(0|zeta_i)
  // order > 0: jets in r
  Jet green_ee_jet;
  std::vector<Jet> zeta_jet;
  std::vector<Jet> factor_ee_jet;
};

GreenCalculus::GreenCalculus(AdaptedMeasure mu, GreenCalculusOptions options)
    : mu_(std::move(mu)), options_(options) {
  for (int i = 1; i <= mu_.size(); ++i)
    factors_.push_back(std::make_shared<const FactorGreenEvaluator>(mu_.factor_measure(i), options_.factor));
  if (!(options_.laziness >= 0.0 && options_.laziness < 1.0)) throw ConfigError("laziness must lie in [0, 1)");
}

GreenCalculus::GreenCalculus(AdaptedMeasure mu, Evaluators factors, GreenCalculusOptions options)
    : mu_(std::move(mu)), options_(options), factors_(std::move(factors)) {
  if (static_cast<int>(factors_.size()) != mu_.size()) throw ConfigError("one factor evaluator per factor");
  for (int i = 1; i <= mu_.size(); ++i)
    if (!(factors_[i - 1]->measure() == mu_.factor_measure(i)))
      throw ConfigError(fmt::format("factor evaluator {} does not match the measure", i));
  if (!(options_.laziness >= 0.0 && options_.laziness < 1.0)) throw ConfigError("laziness must lie in [0, 1)");
}

GreenCalculus::~GreenCalculus() = default;

double GreenCalculus::theta_bar() const { return theta_bar_of(factors_, mu_.weights()); }

double GreenCalculus::phi(double s) const {
  if (s < 0.0 || s > theta_bar() * (1.0 + 1e-12)) throw DomainError(fmt::format("Phi at {} outside [0, theta_bar]", s));
  return phi_of(factors_, mu_.weights(), s);
}

double GreenCalculus::psi(double s) const {
  if (s < 0.0 || s > theta_bar() * (1.0 + 1e-12)) throw DomainError(fmt::format("Psi at {} outside [0, theta_bar]", s));
  return psi_of(factors_, mu_.weights(), s);
}

const ComputeRResult& GreenCalculus::compute_R() const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (R_) return *R_;
  }
  ComputeRResult out;
  const auto& alpha = mu_.weights();
  out.theta_bar = theta_bar();
  out.psi_at_theta_bar = psi_bar_of(factors_, alpha);
  if (out.psi_at_theta_bar > 0.0) {
    out.theta = out.theta_bar;
  } else {
    double hi = out.theta_bar;
    if (!std::isfinite(hi)) {
      hi = 1.0;
      while (psi_of(factors_, alpha, hi) > 0.0) {
        hi *= 2.0;
        if (hi > 1e12) throw NumericalInconsistency("Psi has no sign change below 1e12");
      }
    }
    out.theta = solve_increasing([&](double s) { return -psi_of(factors_, alpha, s); }, 0.0, hi,
                                 options_.root_tol, "root of Psi");
    out.interior_root = true;
  }
  out.green_at_R = phi_of(factors_, alpha, out.theta);
  out.R = out.theta / out.green_at_R;
  std::lock_guard<std::mutex> lock(mutex_);
  R_ = out;
  return *R_;
}

double GreenCalculus::R() const {
  const double eps = options_.laziness;
  return 1.0 / (eps + (1.0 - eps) / R_base());
}

double GreenCalculus::base_argument(double r) const {
  const double eps = options_.laziness;
  if (eps == 0.0) return r;
  return std::min(R_base(), (1.0 - eps) * r / (1.0 - eps * r));
}

double GreenCalculus::t_of(double r) const {
  const auto& R = compute_R();
  if (r < 0.0 || r > R.R * (1.0 + 1e-12)) throw DomainError(fmt::format("r = {} outside [0, R = {}]", r, R.R));
  if (r == 0.0) return 0.0;
  if (r >= R.R) return R.theta;
  const auto& alpha = mu_.weights();
  return solve_increasing([&](double t) { return t / phi_of(factors_, alpha, t) - r; }, 0.0, R.theta,
                          options_.root_tol, "t(r)");
}

double GreenCalculus::zeta(int i, double r) const {
  const double t = t_of(r);
  return factors_.at(i - 1)->rho(mu_.weight(i) * t);
}

std::shared_ptr<const GreenCalculus::Level> GreenCalculus::level(double r, int order) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    for (const auto& [key, lv] : levels_)
      if (key.first == r && key.second >= order) return lv;
  }
  auto lv = std::make_shared<Level>();
  lv->r = r;
  lv->order = order;
  lv->t = t_of(r);
  const int k = size();
  const auto& alpha = mu_.weights();
  if (order == 0) {
    lv->green_ee = -(k - 1.0);
    for (int i = 0; i < k; ++i) {
      const auto& f = *factors_[i];
      const double z = f.rho(alpha[i] * lv->t);
      const double g = f.green(origin(f), z).value;
      lv->zeta.push_back(z);
      lv->factor_ee.push_back(g);
      lv->green_ee += g;
    }
  } else {
    if (r >= R_base()) throw DomainError("r-derivatives of G are not available at r = R");
    const double t0 = lv->t;
    Jet phi_t(-(k - 1.0));
    std::vector<Jet> rho_t(k), g_rho(k);
    for (int i = 0; i < k; ++i) {
      const auto& f = *factors_[i];
      const double rho0 = f.rho(alpha[i] * t0);
      g_rho[i] = jet_of(f.derivatives(origin(f), rho0, 3), "factor Green function");
      const Jet q = Jet::variable(rho0) * g_rho[i];
      const Jet rho_u = q.inverse_function(rho0);
      rho_t[i] = Jet::compose(rho_u, Jet::variable(t0) * alpha[i]);
      phi_t = phi_t + Jet::compose(g_rho[i], rho_t[i]);
    }
    const Jet r_t = Jet::variable(t0) / phi_t;
    const Jet t_r = r_t.inverse_function(t0);
    lv->green_ee_jet = Jet::compose(phi_t, t_r);
    lv->green_ee = lv->green_ee_jet.value();
    for (int i = 0; i < k; ++i) {
      lv->zeta_jet.push_back(Jet::compose(rho_t[i], t_r));
      lv->factor_ee_jet.push_back(Jet::compose(g_rho[i], lv->zeta_jet.back()));
      lv->zeta.push_back(lv->zeta_jet.back().value());
      lv->factor_ee.push_back(lv->factor_ee_jet.back().value());
    }
  }
  std::lock_guard<std::mutex> lock(mutex_);
  if (levels_.size() >= 64) levels_.erase(levels_.begin());
  levels_.emplace_back(std::make_pair(r, order), lv);
  return lv;
}

double GreenCalculus::base_green(const GroupElement& z, const Level& lv) const {
  double g = lv.green_ee;
  for (int j = 0; j < z.syllable_count(); ++j) {
    const auto s = z.syllable_at(j);
    const int i = s.factor - 1;
    const std::vector<std::int32_t> v(s.vector.begin(), s.vector.end());
    g *= factors_[i]->green(v, lv.zeta[i]).value / lv.factor_ee[i];
  }
  return g;
}

double GreenCalculus::green(const GroupElement& z, double r) const {
  if (r < 0.0 || r > R() * (1.0 + 1e-12)) throw DomainError(fmt::format("r = {} outside [0, R = {}]", r, R()));
  const double rb = base_argument(r);
  const double scale = 1.0 / (1.0 - options_.laziness * r);
  return scale * base_green(z, *level(rb, 0));
}

double GreenCalculus::green(const GroupElement& x, const GroupElement& y, double r) const {
  return green(multiply(inverse(x), y), r);
}

Jet GreenCalculus::green_jet(const GroupElement& z, double r) const {
  if (r < 0.0 || r >= R()) throw DomainError(fmt::format("jet of G needs 0 <= r < R, got {}", r));
  const double eps = options_.laziness;
  const double rb = base_argument(r);
  const auto lv = level(rb, 3);
  Jet g = lv->green_ee_jet;
  for (int j = 0; j < z.syllable_count(); ++j) {
    const auto s = z.syllable_at(j);
    const int i = s.factor - 1;
    const std::vector<std::int32_t> v(s.vector.begin(), s.vector.end());
    const Jet gz = jet_of(factors_[i]->derivatives(v, lv->zeta[i], 3), "factor Green function");
    g = g * Jet::compose(gz, lv->zeta_jet[i]) / lv->factor_ee_jet[i];
  }
  if (eps == 0.0) return g;
  const Jet x = Jet::variable(r);
  const Jet denom = Jet(1.0) - x * eps;
  const Jet rb_jet = x * (1.0 - eps) / denom;
  return Jet::compose(g, rb_jet) * denom.reciprocal();
}

double GreenCalculus::martin_kernel(const GroupElement& x, const GroupElement& y, double r) const {
  if (x.is_identity()) return 1.0;
  return green(x, y, r) / green(y, r);
}

SpectralReport GreenCalculus::spectral_report() const {
  const auto& cr = compute_R();
  SpectralReport rep;
  rep.R = cr.R;
  rep.laziness = options_.laziness;
  rep.R_lazy = R();
  rep.theta = cr.theta;
  rep.green_at_R = cr.green_at_R;
  rep.theta_bar = cr.theta_bar;
  rep.psi_at_theta_bar = cr.psi_at_theta_bar;
  rep.degeneracy_tol = options_.degeneracy_tol;
  rep.psi_tol = options_.psi_tol;
  rep.experimental = size() > 2;
  if (rep.experimental) rep.notes.push_back("more than two factors: Phi/Psi assembled with the (k-1) constant");
  if (!std::isfinite(cr.theta_bar)) rep.notes.push_back("theta_bar = inf: Psi(theta_bar) reported as its limit -(k-1)");
  bool any_degenerate = false;
  for (int i = 1; i <= size(); ++i) {
    const double z = factors_[i - 1]->rho(mu_.weight(i) * cr.theta);
    const double Ri = factors_[i - 1]->spectral_radius_inverse();
    rep.zeta_at_R.push_back(z);
    rep.factor_R.push_back(Ri);
    rep.factor_theta.push_back(factors_[i - 1]->theta());
    const bool deg = std::abs(z - Ri) <= options_.degeneracy_tol * Ri;
    rep.degenerate.push_back(deg);
    if (deg) {
      any_degenerate = true;
      const int d = factors_[i - 1]->dimension();
      rep.degeneracy_rank = rep.degeneracy_rank ? std::min(*rep.degeneracy_rank, d) : d;
    }
  }
  rep.non_degenerate = cr.psi_at_theta_bar < -options_.psi_tol;
  rep.convergent = !cr.interior_root && cr.psi_at_theta_bar > options_.psi_tol;
  if (std::abs(cr.psi_at_theta_bar) <= options_.psi_tol) {
    rep.status = SpectralReport::Status::borderline;
    rep.notes.push_back(fmt::format("|Psi(theta_bar)| = {:.3g} within tolerance", std::abs(cr.psi_at_theta_bar)));
  }
  if (rep.non_degenerate == any_degenerate) {
    rep.status = SpectralReport::Status::borderline;
    rep.notes.push_back("sign of Psi(theta_bar) and the zeta comparison disagree");
  }
  double gap = 0.0;
  for (std::size_t i = 0; i < rep.zeta_at_R.size(); ++i)
    gap = std::max(gap, rep.degenerate[i] ? std::abs(rep.zeta_at_R[i] - rep.factor_R[i]) : 0.0);
  rep.max_zeta_gap_check = gap;
  if (rep.non_degenerate || !rep.degeneracy_rank) {
    rep.derivative_order = 1;
  } else {
    rep.derivative_order = (*rep.degeneracy_rank + 1) / 2 - 1;
  }
  return rep;
}

// ---------------------------------------------------------------------------------------------

double F_k_exact(const GreenCalculus& g, int k, const GroupElement& z, double r) {
  const Jet j = g.green_jet(z, r);
  const double G = j.derivative(0), G1 = j.derivative(1), G2 = j.derivative(2), G3 = j.derivative(3);
  switch (k) {
    case 1: return G + r * G1;
    case 2: return 2 * r * G + 4 * r * r * G1 + r * r * r * G2;
    case 3: return 6 * r * r * G + 18 * r * r * r * G1 + 9 * std::pow(r, 4) * G2 + std::pow(r, 5) * G3;
    default: throw DomainError("F_k is implemented for k = 1, 2, 3");
  }
}

std::vector<FkValue> F_k(const GreenCalculus& g, int k, const GroupElement& x, const GroupElement& y,
                         const std::vector<double>& r_grid) {
  if (k < 1 || k > 3) throw DomainError("F_k is implemented for k = 1, 2, 3");
  const GroupElement z = multiply(inverse(x), y);
  const double R = g.R();
  auto at = [&](double r, double h) {
    std::array<double, 7> v{};
    for (int m = -3; m <= 3; ++m) v[m + 3] = g.green(z, r + m * h);
    const double G = v[3];
    const double d1 = (-v[5] + 8 * v[4] - 8 * v[2] + v[1]) / (12 * h);
    const double d2 = (-v[5] + 16 * v[4] - 30 * v[3] + 16 * v[2] - v[1]) / (12 * h * h);
    const double d3 = (-v[6] + 8 * v[5] - 13 * v[4] + 13 * v[2] - 8 * v[1] + v[0]) / (8 * h * h * h);
    switch (k) {
      case 1: return G + r * d1;
      case 2: return 2 * r * G + 4 * r * r * d1 + r * r * r * d2;
      default: return 6 * r * r * G + 18 * r * r * r * d1 + 9 * std::pow(r, 4) * d2 + std::pow(r, 5) * d3;
    }
  };
  std::vector<FkValue> out;
  for (double r : r_grid) {
    if (!(r > 0.0 && r < R)) throw DomainError(fmt::format("F_k needs r in (0, R), got {}", r));
    const double h = 0.02 * std::min(r, R - r) / (k == 3 ? 1.5 : 1.0);
    const double coarse = at(r, h);
    const double fine = at(r, 0.5 * h);
    out.push_back({fine, std::abs(fine - coarse)});
  }
  return out;
}

IteratedSum iterated_sum(const GreenCalculus& g, int s, const GroupElement& x, const GroupElement& y, double r,
                         int ball_radius, const BallOptions& ball) {
  if (s < 1) throw DomainError("iterated sums need s >= 1");
  if (ball_radius < 0) throw DomainError("negative ball radius");
  IteratedSum out;
  auto length = [&](const GroupElement& w) {
    return ball.metric == BallMetric::word ? word_length(w) : static_cast<std::int64_t>(relative_length(w));
  };
  int radius = ball_radius;
  std::vector<GroupElement> B;
  for (;;) {
    try {
      B = enumerate_ball(g.spec(), radius, ball);
    } catch (const BudgetExceeded&) {
      if (radius == 0) throw;
      --radius;
      out.truncated = true;
      continue;
    }
    if (s >= 2 && std::pow(static_cast<double>(B.size()), 2) > 5e8 && radius > 0) {
      --radius;
      out.truncated = true;
      continue;
    }
    break;
  }
  out.ball_size = B.size();
  const std::size_t n = B.size();
  if (s == 1) {
    std::vector<double> shell(radius + 1, 0.0);
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) terms[i] = g.green(x, B[i], r) * g.green(B[i], y, r);
    // elements come in length order, so shells are contiguous
    std::size_t lo = 0;
    for (int m = 0; m <= radius; ++m) {
      std::size_t hi = lo;
      while (hi < n && length(B[hi]) == m) ++hi;
      shell[m] = pairwise_sum(terms.data() + lo, hi - lo);
      lo = hi;
    }
    double acc = 0.0;
    for (int m = 0; m <= radius; ++m) {
      acc += shell[m];
      out.by_radius.push_back(acc);
    }
    out.value = acc;
    out.last_increment = shell[radius];
    return out;
  }
  // v_0(w) = G(w, y); v_j(w) = sum_u G(w, u) v_{j-1}(u)
  auto run = [&](std::size_t m) {
    std::vector<double> v(m);
    for (std::size_t i = 0; i < m; ++i) v[i] = g.green(B[i], y, r);
    std::unordered_map<GroupElement, double, GroupElementHash> memo;
    auto G = [&](const GroupElement& a, const GroupElement& b) {
      const GroupElement z = multiply(inverse(a), b);
      auto it = memo.find(z);
      if (it != memo.end()) return it->second;
      const double val = g.green(z, r);
      memo.emplace(z, val);
      return val;
    };
    for (int j = 1; j < s; ++j) {
      std::vector<double> next(m), row(m);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t u = 0; u < m; ++u) row[u] = G(B[i], B[u]) * v[u];
        next[i] = pairwise_sum(row.data(), m);
      }
      v.swap(next);
    }
    std::vector<double> row(m);
    for (std::size_t u = 0; u < m; ++u) row[u] = g.green(x, B[u], r) * v[u];
    return pairwise_sum(row.data(), m);
  };
  std::size_t inner = 0;
  while (inner < n && length(B[inner]) < radius) ++inner;
  out.value = run(n);
  out.last_increment = out.value - run(inner);
  return out;
}

// ---------------------------------------------------------------------------------------------

std::vector<double> return_probabilities(const ConvolutionTable& table, int n_max) {
  std::vector<double> out;
  for (int n = 0; n <= n_max; ++n) out.push_back(table.transition(GroupElement{}, n));
  return out;
}

GerlEstimate gerl_R_estimate(const std::vector<double>& returns, const GerlOptions& options) {
  const int N = static_cast<int>(returns.size()) - 1;
  if (N < 6) throw DomainError("Gerl estimate needs return probabilities up to n >= 6");
  const double eps = options.laziness;
  GerlEstimate out;
  std::vector<double> p(returns);
  if (eps > 0.0) {
    // binomial inversion of p_eps(n) = sum_k C(n,k) eps^{n-k} (1-eps)^k p(k)
    for (int n = 0; n <= N; ++n) {
      double q = 0.0;
      for (int k = 0; k <= n; ++k)
        q += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)) *
             std::pow(-eps, n - k) * returns[k];
      p[n] = q / std::pow(1.0 - eps, n);
    }
  }
  bool odd_zero = true;
  for (int n = 1; n + 1 <= N; n += 2)
    if (std::abs(p[n]) > 1e-6 * std::max(p[n - 1], p[n + 1])) odd_zero = false;
  out.period = odd_zero ? 2 : 1;
  std::vector<double> xs, ys;
  if (odd_zero) {
    if (!options.even_steps) {
      out.inconclusive = true;
      out.R = out.R_base = std::numeric_limits<double>::quiet_NaN();
      out.error = kInf;
      out.note = "period-2 walk: consecutive ratios oscillate; enable even-step handling";
      return out;
    }
    for (int m = 1; 2 * m + 2 <= N; ++m) {
      xs.push_back(1.0 / m);
      ys.push_back(p[2 * m + 2] / p[2 * m] * std::pow((m + 1.0) / m, 1.5));
    }
  } else {
    for (int n = 1; n + 1 <= N; ++n) {
      if (!(p[n] > 0.0)) continue;
      xs.push_back(1.0 / n);
      ys.push_back(p[n + 1] / p[n] * std::pow((n + 1.0) / n, 1.5));
    }
  }
  const int order = std::min<int>(options.order, static_cast<int>(xs.size()) - 2);
  if (order < 0) throw DomainError("Gerl estimate: not enough usable ratios");
  const auto ex = extrapolate_to_zero(xs, ys, order);
  const double power = odd_zero ? 0.5 : 1.0;
  out.R_base = std::pow(ex.value, -power);
  out.error = power * out.R_base * ex.error / ex.value;
  out.R = 1.0 / (eps + (1.0 - eps) / out.R_base);
  out.error *= (1.0 - eps) * std::pow(out.R / out.R_base, 2);
  out.note = fmt::format("ratio extrapolation in 1/{} of order {}", odd_zero ? "m (even steps)" : "n", order);
  return out;
}

SeriesGreen direct_series_green(const ConvolutionTable& table, const GroupElement& g, double r, double R,
                                int n_max, int weight) {
  if (weight != 0 && weight != 1) throw DomainError("series weight must be 0 or 1");
  if (!(r > 0.0 && r < R)) throw DomainError("direct series needs 0 < r < R");
  const int N = std::min(n_max, table.reach());
  SeriesGreen out;
  out.terms = N;
  std::vector<double> P(N + 1);
  for (int n = 0; n <= N; ++n) P[n] = table.transition(g, n);
  auto w = [weight](double n) { return weight == 0 ? 1.0 : n + 1.0; };
  std::vector<double> terms(N + 1);
  for (int n = 0; n <= N; ++n) terms[n] = w(n) * P[n] * std::pow(r, n);
  out.truncated = pairwise_sum(terms.data(), terms.size());
  const double x = r / R;
  for (int parity = 0; parity < 2; ++parity) {
    std::vector<int> ns;
    for (int n = N; n >= 2 && ns.size() < 3; --n)
      if (n % 2 == parity && P[n] > 0.0) ns.push_back(n);
    if (ns.size() < 3) continue;
    std::reverse(ns.begin(), ns.end());
    // three-term model through the three points
    Eigen::Matrix3d A;
    Eigen::Vector3d y;
    for (int i = 0; i < 3; ++i) {
      const double n = ns[i];
      A(i, 0) = 1.0;
      A(i, 1) = 1.0 / n;
      A(i, 2) = 1.0 / (n * n);
      y(i) = std::log(P[ns[i]]) + n * std::log(R) + 1.5 * std::log(n);
    }
    const Eigen::Vector3d c = A.colPivHouseholderQr().solve(y);
    // two-term model through the last two points
    const double n1 = ns[1], n2 = ns[2];
    const double b2 = (y(2) - y(1)) / (1.0 / n2 - 1.0 / n1);
    const double a2 = y(2) - b2 / n2;
    double tail3 = 0.0, tail2 = 0.0;
    for (int n = N + 1; n < 5'000'000; ++n) {
      if (n % 2 != parity) continue;
      const double base = w(n) * std::pow(n, -1.5) * std::exp(n * std::log(x));
      const double t3 = base * std::exp(c(0) + c(1) / n + c(2) / (double(n) * n));
      const double t2 = base * std::exp(a2 + b2 / n);
      tail3 += t3;
      tail2 += t2;
      if (t3 < 1e-18 * tail3 && n > N + 20) break;
    }
    out.tail += tail3;
    out.tail_uncertainty += std::abs(tail3 - tail2);
    // geometric bound from the last ratio, safety factor 2
    const double q = P[ns[2]] / P[ns[1]] * std::pow(r, ns[2] - ns[1]);
    if (q < 1.0) out.geometric_bound += 2.0 * w(ns[2]) * P[ns[2]] * std::pow(r, ns[2]) * q / (1.0 - q);
    else out.geometric_bound = kInf;
  }
  out.value = out.truncated + out.tail;
  return out;
}

// ---------------------------------------------------------------------------------------------

int homogeneous_dimension(const std::vector<std::pair<int, int>>& ranks) {
  int d = 0;
  int last = 0;
  for (const auto& [k, rank] : ranks) {
    if (k <= last) throw DomainError("lower central series steps must be increasing and start at 1");
    if (rank < 0) throw DomainError("negative rank");
    last = k;
    d += k * rank;
  }
  return d;
}

namespace {

void check_factors(const std::vector<LatticeMeasure>& factors, const FreeProductSpec& spec) {
  if (static_cast<int>(factors.size()) != spec.size() || spec.size() < 2)
    throw ConfigError("one measure per factor and at least two factors");
  for (int i = 1; i <= spec.size(); ++i)
    if (factors[i - 1].rank() != spec.rank(i)) throw ConfigError(fmt::format("factor {} rank mismatch", i));
}

}  // namespace

double psi_at_theta_bar(const std::vector<LatticeMeasure>& factors, const FreeProductSpec& spec,
                        const std::vector<double>& alpha, const FactorGreenOptions& fo) {
  check_factors(factors, spec);
  return psi_bar_of(build_evaluators(factors, fo), alpha);
}

TuneReport tune_alpha(const std::vector<LatticeMeasure>& factors, const FreeProductSpec& spec, int steps,
                      double lo, double hi, const FactorGreenOptions& fo) {
  check_factors(factors, spec);
  if (steps < 2) throw ConfigError("tune_alpha needs at least two grid points");
  const auto ev = build_evaluators(factors, fo);
  const int k = spec.size();
  std::vector<std::vector<double>> grid;
  if (k == 2) {
    for (int j = 0; j < steps; ++j) {
      const double a = lo + (hi - lo) * j / (steps - 1);
      grid.push_back({a, 1.0 - a});
    }
  } else {
    // interior simplex points n_i / (steps + 1), n_i >= 1
    const int total = steps + 1;
    std::vector<int> c(k, 1);
    auto rec = [&](auto&& self, int pos, int left) -> void {
      if (pos == k - 1) {
        if (left < 1) return;
        c[pos] = left;
        std::vector<double> a(k);
        for (int i = 0; i < k; ++i) a[i] = static_cast<double>(c[i]) / total;
        grid.push_back(a);
        return;
      }
      for (int x = 1; x <= left - (k - 1 - pos); ++x) {
        c[pos] = x;
        self(self, pos + 1, left - x);
      }
    };
    rec(rec, 0, total);
  }
  TuneReport out;
  out.best_psi = kInf;
  for (const auto& a : grid) {
    AlphaPoint p{a, psi_bar_of(ev, a), false};
    p.non_degenerate = p.psi_at_theta_bar < 0.0;
    if (p.psi_at_theta_bar < out.best_psi) {
      out.best_psi = p.psi_at_theta_bar;
      out.best = a;
    }
    out.grid.push_back(p);
  }
  out.achieved = out.best_psi < 0.0;
  if (k == 2)
    for (std::size_t j = 1; j < out.grid.size(); ++j) {
      const double s0 = out.grid[j - 1].psi_at_theta_bar, s1 = out.grid[j].psi_at_theta_bar;
      if ((s0 < 0.0) != (s1 < 0.0)) {
        out.bracket = std::make_pair(out.grid[j - 1].alpha[0], out.grid[j].alpha[0]);
        break;
      }
    }
  return out;
}

std::pair<double, double> refine_alpha_bracket(const std::vector<LatticeMeasure>& factors,
                                               const FreeProductSpec& spec, double lo, double hi, double width,
                                               const FactorGreenOptions& fo) {
  check_factors(factors, spec);
  if (spec.size() != 2) throw ConfigError("bracket refinement is defined for two factors");
  const auto ev = build_evaluators(factors, fo);
  auto f = [&](double a) { return psi_bar_of(ev, {a, 1.0 - a}); };
  const bool lo_neg = f(lo) < 0.0;
  if (lo_neg == (f(hi) < 0.0)) throw NumericalInconsistency("Psi(theta_bar) has no sign change on the bracket");
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    if ((f(mid) < 0.0) == lo_neg) lo = mid; else hi = mid;
  }
  return {lo, hi};
}

}  // namespace freewalk
