#include "freewalk/factor_green.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numbers>

#include "freewalk/numerics.hpp"

namespace freewalk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Smooth step: 1 on [0, a], 0 beyond b, C-infinity in between.
double cutoff(double r, double a, double b) {
  if (r <= a) return 1.0;
  if (r >= b) return 0.0;
  const double x = (b - r) / (b - a);
  const double p = std::exp(-1.0 / x);
  const double q = std::exp(-1.0 / (1.0 - x));
  return p / (p + q);
}

// Multinomial expansions of (c0 + a_1 + ... + a_d)^s.
struct Composition {
  double coef;
  int q0;
  std::vector<int> q;
};

std::vector<Composition> compositions(int d, int s) {
  std::vector<Composition> out;
  std::vector<int> q(d, 0);
  auto rec = [&](auto&& self, int pos, int left) -> void {
    if (pos == d) {
      double c = factorial(s) / factorial(left);
      for (int x : q) c /= factorial(x);
      out.push_back({c, left, q});
      return;
    }
    for (int x = 0; x <= left; ++x) {
      q[pos] = x;
      self(self, pos + 1, left - x);
    }
    q[pos] = 0;
  };
  rec(rec, 0, s);
  return out;
}

}  // namespace

std::string to_string(QuadratureMode m) {
  switch (m) {
    case QuadratureMode::laplace: return "laplace";
    case QuadratureMode::grid: return "grid";
    case QuadratureMode::series: return "series";
    default: return "auto";
  }
}

QuadratureMode parse_quadrature_mode(const std::string& s) {
  if (s == "auto") return QuadratureMode::automatic;
  if (s == "laplace") return QuadratureMode::laplace;
  if (s == "grid" || s == "quadrature") return QuadratureMode::grid;
  if (s == "series") return QuadratureMode::series;
  throw ConfigError(fmt::format("unknown quadrature mode '{}'", s));
}

// ---------------------------------------------------------------------------------------------
// Tensor grid

double singular_model_integral(int d, int s, double det_cov, double cutoff_radius) {
  const int p = d - 3 - 2 * s;  // radial power after the Jacobian r^{d-1}
  if (p <= -1) return kInf;
  const double rho = cutoff_radius;
  const double a = 0.5 * rho;
  double radial = std::pow(a, p + 1) / (p + 1);
  radial += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double r) { return std::pow(r, p) * cutoff(r, a, rho); }, a, rho, 10, 1e-15);
  const double sphere = 2.0 * std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d);
  return std::pow(2.0 * kPi, -d) / std::sqrt(det_cov) * factorial(s) * std::pow(2.0, s + 1) *
         sphere * radial;
}

TorusQuadrature::TorusQuadrature(const LatticeMeasure& m, int nodes_per_axis, std::size_t max_points)
    : measure_(&m), d_(m.rank()), m_(nodes_per_axis), folded_(m.reflection_symmetric()) {
  if (m_ < 4 || m_ % 2 != 0) throw DomainError("grid needs an even node count >= 4");
  const int per_axis = folded_ ? m_ / 2 : m_;
  double pts = std::pow(static_cast<double>(per_axis), d_);
  if (pts > static_cast<double>(max_points))
    throw BudgetExceeded(fmt::format("torus grid with {}^{} points exceeds the cap of {}", per_axis, d_, max_points));
  points_ = static_cast<std::size_t>(pts);
  const double h = 2.0 * kPi / m_;
  for (int i = 0; i < per_axis; ++i) axis_nodes_.push_back(folded_ ? (i + 0.5) * h : -kPi + (i + 0.5) * h);

  cov_ = m.covariance();
  const auto& cov = cov_;
  Eigen::MatrixXd c(d_, d_);
  for (int i = 0; i < d_; ++i)
    for (int j = 0; j < d_; ++j) c(i, j) = cov[i * d_ + j];
  det_cov_ = c.determinant();
  if (!(det_cov_ > 0.0)) throw DomainError("degenerate covariance: support does not span the lattice");
  const Eigen::MatrixXd ci = c.inverse();
  cov_inv_.assign(ci.data(), ci.data() + d_ * d_);
  double worst = 0.0;
  for (int j = 0; j < d_; ++j) worst = std::max(worst, std::sqrt(ci(j, j)));
  cutoff_radius_ = 0.9 * kPi / worst;

  if (points_ <= (std::size_t{1} << 23)) {
    muhat_.resize(points_);
    std::vector<double> k(d_);
    for (std::size_t f = 0; f < points_; ++f) {
      node(f, k.data());
      muhat_[f] = m.char_function(k);
    }
  }
}

void TorusQuadrature::node(std::size_t flat, double* k) const {
  const std::size_t per_axis = axis_nodes_.size();
  for (int j = d_ - 1; j >= 0; --j) {
    k[j] = axis_nodes_[flat % per_axis];
    flat /= per_axis;
  }
}

double TorusQuadrature::muhat_at(std::size_t flat) const {
  if (!muhat_.empty()) return muhat_[flat];
  std::vector<double> k(d_);
  node(flat, k.data());
  return measure_->char_function(k);
}

double TorusQuadrature::integral_of_one() const {
  return static_cast<double>(points_) / static_cast<double>(points_);
}

double TorusQuadrature::integrate(const std::vector<std::int32_t>& g, double t, int s, bool subtract) const {
  if (static_cast<int>(g.size()) != d_) throw DomainError("lattice point has the wrong dimension");
  const std::size_t per_axis = axis_nodes_.size();
  std::vector<std::vector<double>> cos_axis(d_, std::vector<double>(per_axis));
  for (int j = 0; j < d_; ++j)
    for (std::size_t i = 0; i < per_axis; ++i) cos_axis[j][i] = std::cos(g[j] * axis_nodes_[i]);
  const double sf = factorial(s);
  const double a = 0.5 * cutoff_radius_;
  // blocks of the flat index, summed pairwise for a fixed reduction order
  constexpr std::size_t kBlock = 4096;
  std::vector<double> partial((points_ + kBlock - 1) / kBlock, 0.0);
  std::vector<double> k(d_);
  std::vector<std::size_t> idx(d_);
  for (std::size_t b = 0; b < partial.size(); ++b) {
    double acc = 0.0;
    const std::size_t hi = std::min(points_, (b + 1) * kBlock);
    for (std::size_t f = b * kBlock; f < hi; ++f) {
      std::size_t rest = f;
      for (int j = d_ - 1; j >= 0; --j) {
        idx[j] = rest % per_axis;
        rest /= per_axis;
        k[j] = axis_nodes_[idx[j]];
      }
      double c;
      if (folded_) {
        c = 1.0;
        for (int j = 0; j < d_; ++j) c *= cos_axis[j][idx[j]];
      } else {
        double phase = 0.0;
        for (int j = 0; j < d_; ++j) phase += g[j] * k[j];
        c = std::cos(phase);
      }
      const double mh = muhat_at(f);
      const double inv = 1.0 / (1.0 - t * mh);
      double val = c * sf * inv;
      for (int i = 0; i < s; ++i) val *= mh * inv;
      if (subtract) {
        double q = 0.0;
        for (int i = 0; i < d_; ++i)
          for (int j = 0; j < d_; ++j) q += k[i] * cov_[i * d_ + j] * k[j];
        const double r = std::sqrt(q);
        if (r < cutoff_radius_) {
          const double iq = 2.0 / q;
          double model = sf * iq;
          for (int i = 0; i < s; ++i) model *= iq;
          val -= model * cutoff(r, a, cutoff_radius_);
        }
      }
      acc += val;
    }
    partial[b] = acc;
  }
  double total = pairwise_sum(partial.data(), partial.size()) / static_cast<double>(points_);
  if (subtract) total += singular_model_integral(d_, s, det_cov_, cutoff_radius_);
  return total;
}

// ---------------------------------------------------------------------------------------------
// Laplace route. With u = w / t,
//   G^{(s)}(g|t) = t^{-1} int_0^inf (w/t)^s e^{-eps w} A_s(g, w) dw,  eps = 1/t - 1,
//   A_s(g, w) = E_k[cos(k.g) muhat^s e^{w (muhat - 1)}].
// For axis-supported measures e^{w(muhat-1)} factorizes over coordinates, so A_s is a finite sum
// of products of one-dimensional periodic integrals B_j(m, q, w), tabulated on a grid in log w.

struct FactorGreenEvaluator::Laplace {
  static constexpr int kQmax = 3;
  int d = 0;
  int max_coord = 0;
  double c0 = 0.0;
  double h = 0.125;
  double vmin = -40.0;
  int nodes = 0;
  std::vector<int> axis_type;
  std::vector<std::vector<std::pair<int, double>>> types;
  std::vector<double> sigma2;  // per axis
  std::vector<double> table;   // [type][node][q][m]
  std::array<std::vector<Composition>, 4> comps;

  double b(int type, int node, int q, int m) const {
    return table[((static_cast<std::size_t>(type) * nodes + node) * (kQmax + 1) + q) * (max_coord + 1) + m];
  }
};

const FactorGreenEvaluator::Laplace& FactorGreenEvaluator::laplace_tables(int max_coord) const {
  std::lock_guard<std::mutex> lock(mutex_);
  if (laplace_ && laplace_->max_coord >= max_coord) return *laplace_;
  if (!measure_.axis_supported())
    throw DomainError("the Laplace route needs a measure supported on the coordinate axes");
  auto L = std::make_unique<Laplace>();
  const int d = measure_.rank();
  L->d = d;
  L->max_coord = std::max({max_coord, options_.max_coordinate, laplace_ ? laplace_->max_coord : 0});
  L->h = options_.laplace_step;
  L->vmin = options_.laplace_log_w_min;
  L->nodes = static_cast<int>(std::floor((std::log(options_.laplace_w_max) - L->vmin) / L->h)) + 1;
  L->c0 = measure_.mass_at_origin();
  L->axis_type.assign(d, -1);
  L->sigma2.assign(d, 0.0);
  for (int j = 0; j < d; ++j) {
    std::map<int, double> w;
    for (const auto& a : measure_.atoms())
      if (a.v[j] > 0) w[a.v[j]] += 2.0 * a.p;
    std::vector<std::pair<int, double>> list(w.begin(), w.end());
    for (const auto& [m, p] : list) L->sigma2[j] += p * m * m;
    auto it = std::find(L->types.begin(), L->types.end(), list);
    if (it == L->types.end()) {
      L->axis_type[j] = static_cast<int>(L->types.size());
      L->types.push_back(list);
    } else {
      L->axis_type[j] = static_cast<int>(it - L->types.begin());
    }
  }
  const int mc = L->max_coord;
  const int Q = Laplace::kQmax;
  L->table.assign(L->types.size() * L->nodes * (Q + 1) * (mc + 1), 0.0);
  std::vector<double> cosm(mc + 1);
  for (std::size_t ty = 0; ty < L->types.size(); ++ty) {
    const auto& wts = L->types[ty];
    double a0 = 0.0, var = 0.0;
    int step = 1;
    for (const auto& [m, p] : wts) {
      a0 += p;
      var += p * m * m;
      step = std::max(step, m);
    }
    for (int node = 0; node < L->nodes; ++node) {
      const double w = std::exp(L->vmin + node * L->h);
      int M = 2 * (mc + Q * step) + 32 + static_cast<int>(std::ceil(12.0 * std::sqrt(w * var)));
      M += M % 2;
      const double dk = 2.0 * kPi / M;
      double* out = &L->table[((ty * L->nodes + node) * (Q + 1)) * (mc + 1)];
      for (int l = 0; l <= M / 2; ++l) {
        const double k = l * dk;
        const double wt = (l == 0 || l == M / 2) ? 1.0 / M : 2.0 / M;
        double a = 0.0;
        for (const auto& [m, p] : wts) a += p * std::cos(m * k);
        const double e = wt * std::exp(w * (a - a0));
        const double ck = std::cos(k);
        cosm[0] = 1.0;
        if (mc >= 1) cosm[1] = ck;
        for (int m = 2; m <= mc; ++m) cosm[m] = 2.0 * ck * cosm[m - 1] - cosm[m - 2];
        double aq = 1.0;
        for (int q = 0; q <= Q; ++q) {
          for (int m = 0; m <= mc; ++m) out[q * (mc + 1) + m] += cosm[m] * aq * e;
          aq *= a;
        }
      }
    }
  }
  for (int s = 0; s <= 3; ++s) L->comps[s] = compositions(d, s);
  laplace_ = std::move(L);
  return *laplace_;
}

std::array<GreenValue, 4> FactorGreenEvaluator::laplace(const std::vector<std::int32_t>& g, double t,
                                                        int order) const {
  int maxc = 0;
  for (auto c : g) maxc = std::max(maxc, std::abs(c));
  const Laplace& L = laplace_tables(maxc);
  const int d = L.d;
  const double eps = 1.0 / t - 1.0;
  const double log_t = std::log(t);
  const double log_wmax = L.vmin + (L.nodes - 1) * L.h;

  // Gaussian model of A_s beyond the table (local limit: muhat -> 1 - k.Sigma k / 2).
  double det = 1.0, quad = 0.0, model_corr = static_cast<double>(d);
  for (int j = 0; j < d; ++j) {
    det *= L.sigma2[j];
    quad += g[j] * static_cast<double>(g[j]) / L.sigma2[j];
    model_corr += g[j] * static_cast<double>(g[j]) / L.sigma2[j];
  }
  auto model = [&](double w) {
    return std::pow(2.0 * kPi * w, -0.5 * d) / std::sqrt(det) * std::exp(-quad / (2.0 * w));
  };

  std::array<double, 4> sum_h{}, sum_2h{}, tail{}, first{};
  std::array<bool, 4> divergent{};
  for (int s = 0; s <= order; ++s) divergent[s] = eps == 0.0 && !finite_at_one(s);

  for (int node = 0;; ++node) {
    const double v = L.vmin + node * L.h;
    const double w = std::exp(v);
    if (v > 720.0) {
      for (int s = 0; s <= order; ++s) divergent[s] = true;
      break;
    }
    const bool in_table = node < L.nodes;
    if (eps * w > 745.0) break;
    std::array<double, 4> a{};
    if (in_table) {
      for (int s = 0; s <= order; ++s) {
        double acc = 0.0;
        for (const auto& c : L.comps[s]) {
          double prod = c.coef * std::pow(L.c0, c.q0);
          if (prod == 0.0) continue;
          for (int j = 0; j < d && prod != 0.0; ++j) prod *= L.b(L.axis_type[j], node, c.q[j], std::abs(g[j]));
          acc += prod;
        }
        a[s] = acc;
      }
      if (node == 0) first = a;
    } else {
      const double m = model(w);
      for (int s = 0; s <= order; ++s) a[s] = m;
    }
    bool all_small = !in_table;
    for (int s = 0; s <= order; ++s) {
      if (divergent[s]) continue;
      const double logf = v - log_t + s * (v - log_t) - eps * w;
      const double term = L.h * std::exp(logf) * a[s];
      sum_h[s] += term;
      if (node % 2 == 0) sum_2h[s] += 2.0 * term;
      if (!in_table) tail[s] += term;
      const bool past_peak = eps * w > s + 1.0 || (s + 1.0 - 0.5 * d) < 0.0;
      if (!(past_peak && std::abs(term) <= 1e-19 * std::abs(sum_h[s]))) all_small = false;
    }
    if (all_small && v > log_wmax) break;
  }
  // w below the table: A_s frozen at its first node, integrated exactly
  const double w0 = std::exp(L.vmin - 0.5 * L.h);
  for (int s = 0; s <= order; ++s) {
    if (divergent[s]) continue;
    const double head = eps > 0.0
                            ? boost::math::tgamma_lower(s + 1.0, eps * w0) / std::pow(eps * t, s + 1.0)
                            : std::pow(w0 / t, s + 1.0) / (s + 1.0);
    sum_h[s] += first[s] * head;
    sum_2h[s] += first[s] * head;
  }
  std::array<GreenValue, 4> out{};
  for (int s = 0; s <= order; ++s) {
    if (divergent[s]) {
      out[s] = {kInf, kInf, true};
      continue;
    }
    const double err = std::abs(sum_h[s] - sum_2h[s]) + std::abs(tail[s]) * model_corr / std::exp(log_wmax) +
                       1e-15 * std::abs(sum_h[s]);
    out[s] = {sum_h[s], err, false};
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Series route: dense lattice convolution powers.

struct FactorGreenEvaluator::Series {
  int d = 0;
  int terms = 0;
  int radius = 0;  // stored box radius
  std::vector<double> values;  // [n][box]
  std::vector<double> sup;     // max_g P^n(g)
  std::size_t box = 0;

  std::ptrdiff_t index(const std::vector<std::int32_t>& g) const {
    std::size_t f = 0;
    for (int j = 0; j < d; ++j) {
      if (std::abs(g[j]) > radius) return -1;
      f = f * (2 * radius + 1) + (g[j] + radius);
    }
    return static_cast<std::ptrdiff_t>(f);
  }
  double at(int n, std::ptrdiff_t f) const { return values[static_cast<std::size_t>(n) * box + f]; }
};

const FactorGreenEvaluator::Series& FactorGreenEvaluator::series_tables() const {
  std::lock_guard<std::mutex> lock(mutex_);
  if (series_) return *series_;
  auto S = std::make_unique<Series>();
  const int d = measure_.rank();
  S->d = d;
  int step = 1;
  for (const auto& a : measure_.atoms())
    for (auto c : a.v) step = std::max(step, std::abs(c));
  // pick the number of terms allowed by the work budget
  int n_terms = 3;
  double work = 0.0;
  for (int n = 1; n <= options_.series_terms; ++n) {
    work += std::pow(2.0 * n * step + 1, d) * static_cast<double>(measure_.atoms().size());
    if (work > static_cast<double>(options_.series_budget)) break;
    n_terms = n;
  }
  S->terms = n_terms;
  S->radius = std::min(options_.max_coordinate, n_terms * step);
  while (std::pow(2.0 * S->radius + 1, d) > 2e6 && S->radius > 3) --S->radius;
  S->box = static_cast<std::size_t>(std::pow(2 * S->radius + 1, d));
  S->values.assign(static_cast<std::size_t>(n_terms + 1) * S->box, 0.0);
  S->sup.assign(n_terms + 1, 0.0);

  // rolling dense array with radius n * step
  int cur_r = 0;
  std::vector<double> cur(1, 1.0);
  auto dense_index = [d](const std::vector<int>& x, int r) {
    std::size_t f = 0;
    for (int j = 0; j < d; ++j) f = f * (2 * r + 1) + (x[j] + r);
    return f;
  };
  auto store = [&](int n) {
    std::vector<int> x(d, 0);
    const int side = 2 * S->radius + 1;
    for (std::size_t f = 0; f < S->box; ++f) {
      std::size_t rest = f;
      bool inside = true;
      for (int j = d - 1; j >= 0; --j) {
        x[j] = static_cast<int>(rest % side) - S->radius;
        rest /= side;
        if (std::abs(x[j]) > cur_r) inside = false;
      }
      S->values[static_cast<std::size_t>(n) * S->box + f] = inside ? cur[dense_index(x, cur_r)] : 0.0;
    }
    S->sup[n] = *std::max_element(cur.begin(), cur.end());
  };
  store(0);
  for (int n = 1; n <= n_terms; ++n) {
    const int nr = cur_r + step;
    const int side = 2 * nr + 1;
    std::vector<double> next(static_cast<std::size_t>(std::pow(side, d)), 0.0);
    std::vector<int> x(d, 0), y(d, 0);
    const int old_side = 2 * cur_r + 1;
    for (std::size_t f = 0; f < cur.size(); ++f) {
      if (cur[f] == 0.0) continue;
      std::size_t rest = f;
      for (int j = d - 1; j >= 0; --j) {
        x[j] = static_cast<int>(rest % old_side) - cur_r;
        rest /= old_side;
      }
      for (const auto& a : measure_.atoms()) {
        for (int j = 0; j < d; ++j) y[j] = x[j] + a.v[j];
        next[dense_index(y, nr)] += cur[f] * a.p;
      }
    }
    cur.swap(next);
    cur_r = nr;
    store(n);
  }
  series_ = std::move(S);
  return *series_;
}

std::array<GreenValue, 4> FactorGreenEvaluator::series(const std::vector<std::int32_t>& g, double t,
                                                       int order) const {
  const Series& S = series_tables();
  const auto f = S.index(g);
  if (f < 0) throw DomainError("lattice point outside the series table");
  std::array<GreenValue, 4> out{};
  for (int s = 0; s <= order; ++s) {
    double sum = 0.0;
    for (int n = s; n <= S.terms; ++n) {
      double c = 1.0;
      for (int i = 0; i < s; ++i) c *= (n - i);
      sum += c * S.at(n, f) * (n - s == 0 ? 1.0 : std::pow(t, n - s));
    }
    // P^n(g) <= sup_h P^N(h) for n >= N
    double tail = 0.0;
    if (t > 0.0) {
      if (t >= 1.0) {
        tail = kInf;
      } else {
        for (int n = S.terms + 1; n < S.terms + 100000; ++n) {
          double c = 1.0;
          for (int i = 0; i < s; ++i) c *= (n - i);
          const double term = c * std::pow(t, n - s);
          tail += term;
          if (term < 1e-18 * (tail + 1e-300) && n > S.terms + 10) break;
        }
        tail *= S.sup[S.terms];
      }
    }
    out[s] = {sum, tail, false};
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

FactorGreenEvaluator::FactorGreenEvaluator(LatticeMeasure m, FactorGreenOptions options)
    : measure_(std::move(m)), options_(options) {
  if (!measure_.is_symmetric()) throw ConfigError("factor Green functions need a symmetric measure");
  if (!measure_.generates_lattice()) throw ConfigError("factor measure does not generate its lattice");
}

FactorGreenEvaluator::~FactorGreenEvaluator() = default;

const TorusQuadrature& FactorGreenEvaluator::grid_at(int nodes) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto& slot = grids_[nodes];
  if (!slot) slot = std::make_unique<TorusQuadrature>(measure_, nodes, options_.max_grid_points);
  return *slot;
}

std::array<GreenValue, 4> FactorGreenEvaluator::grid(const std::vector<std::int32_t>& g, double t,
                                                     int order) const {
  const int d = dimension();
  const int base = options_.grid_nodes > 0 ? options_.grid_nodes : (d <= 3 ? 64 : d == 4 ? 32 : 16);
  std::array<GreenValue, 4> out{};
  for (int s = 0; s <= order; ++s) {
    if (t == 1.0 && !finite_at_one(s)) {
      out[s] = {kInf, kInf, true};
      continue;
    }
    const bool singular = t == 1.0;
    const double v1 = grid_at(base).integrate(g, t, s, singular);
    if (!options_.grid_refine) {
      out[s] = {v1, kInf, false};
      continue;
    }
    const double v2 = grid_at(2 * base).integrate(g, t, s, singular);
    if (singular) {
      // remainder is homogeneous of degree -2s at k = 0: midpoint error ~ h^{d - 2s}
      const double f = std::pow(2.0, d - 2 * s);
      const double v = (f * v2 - v1) / (f - 1.0);
      out[s] = {v, std::abs(v - v2), false};
    } else {
      out[s] = {v2, std::abs(v2 - v1), false};
    }
  }
  return out;
}

QuadratureMode FactorGreenEvaluator::resolve(QuadratureMode requested, double t) const {
  if (t == 0.0) return QuadratureMode::series;
  if (requested != QuadratureMode::automatic) return requested;
  // power series converges like t^n; the log-w table would need to extend below its lower end
  if (t <= 1e-3) return QuadratureMode::series;
  if (measure_.axis_supported()) return QuadratureMode::laplace;
  if (dimension() <= 2 && t <= 0.9) return QuadratureMode::series;
  return QuadratureMode::grid;
}

std::array<GreenValue, 4> FactorGreenEvaluator::derivatives_with(QuadratureMode mode,
                                                                 const std::vector<std::int32_t>& g,
                                                                 double t, int order) const {
  if (static_cast<int>(g.size()) != dimension()) throw DomainError("lattice point has the wrong dimension");
  if (order < 0 || order > 3) throw DomainError("derivative order must be in 0..3");
  if (!(t >= 0.0)) throw DomainError("negative argument to a factor Green function");
  if (t > 1.0) throw DomainError(fmt::format("t = {} exceeds the radius of convergence 1", t));
  if (t == 1.0 && dimension() <= 2) {
    std::array<GreenValue, 4> out{};
    for (int s = 0; s <= order; ++s) out[s] = {kInf, kInf, true};
    return out;
  }
  switch (resolve(mode, t)) {
    case QuadratureMode::laplace: return laplace(g, t, order);
    case QuadratureMode::grid: return grid(g, t, order);
    default: return series(g, t, order);
  }
}

std::array<GreenValue, 4> FactorGreenEvaluator::derivatives(const std::vector<std::int32_t>& g, double t,
                                                            int order) const {
  const auto key = std::make_pair(g, std::make_pair(t, order));
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  auto v = derivatives_with(options_.mode, g, t, order);
  std::lock_guard<std::mutex> lock(mutex_);
  if (cache_.size() > 200'000) cache_.clear();
  cache_.emplace(key, v);
  return v;
}

GreenValue FactorGreenEvaluator::derivative(const std::vector<std::int32_t>& g, double t, int s) const {
  return derivatives(g, t, s)[s];
}

double FactorGreenEvaluator::theta() const {
  if (theta_ >= 0.0) return theta_;
  const double th = dimension() <= 2 ? kInf : green(std::vector<std::int32_t>(dimension(), 0), 1.0).value;
  theta_ = th;
  return th;
}

double FactorGreenEvaluator::rho(double u) const {
  if (u < 0.0) throw DomainError("negative argument to the factor inversion");
  if (u == 0.0) return 0.0;
  const std::vector<std::int32_t> zero(dimension(), 0);
  const double th = theta();
  if (std::isfinite(th)) {
    if (u > th * (1.0 + 1e-12)) throw DomainError(fmt::format("{} exceeds theta_i = {}", u, th));
    if (u >= th) return 1.0;
  }
  const double hi = std::isfinite(th) ? 1.0 : 1.0 - 1e-15;
  auto f = [&](double r) { return r * green(zero, r).value - u; };
  if (!std::isfinite(th) && f(hi) < 0.0)
    throw DomainError(fmt::format("{} beyond the reachable range of r G_i(0|r)", u));
  return solve_increasing(f, 0.0, hi, 1e-14, "factor inversion");
}

double FactorGreenEvaluator::phi(double u) const {
  if (u == 0.0) return 1.0;
  const double r = rho(u);
  return green(std::vector<std::int32_t>(dimension(), 0), r).value;
}

double FactorGreenEvaluator::psi(double u) const {
  if (u == 0.0) return 1.0;
  const double r = rho(u);
  const auto d = derivatives(std::vector<std::int32_t>(dimension(), 0), r, 1);
  if (d[1].divergent) return 0.0;
  const double G = d[0].value;
  return G * G / (G + r * d[1].value);
}

}  // namespace freewalk
