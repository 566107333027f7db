#include "freewalk/tools/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <memory>
#include <set>

#include "freewalk/ancona.hpp"
#include "freewalk/boundary.hpp"
#include "freewalk/errors.hpp"
#include "freewalk/parallel.hpp"
#include "freewalk/product_green.hpp"

#ifndef FREEWALK_VERSION
#define FREEWALK_VERSION "0.0.0"
#endif

namespace freewalk::tools {

namespace fs = std::filesystem;

const char* artifact_version() { return FREEWALK_VERSION; }

namespace {

// Non-finite doubles become strings so the JSON stays lossless.
json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

json report_json(const SpectralReport& rep, const ComputeRResult& cr) {
  json degenerate = json::array();
  for (bool b : rep.degenerate) degenerate.push_back(b);
  json zeta = json::array(), fR = json::array(), fth = json::array();
  for (double z : rep.zeta_at_R) zeta.push_back(num(z));
  for (double z : rep.factor_R) fR.push_back(num(z));
  for (double z : rep.factor_theta) fth.push_back(num(z));
  return {{"R", num(rep.R)},
          {"R_lazy", num(rep.R_lazy)},
          {"laziness", rep.laziness},
          {"theta", num(rep.theta)},
          {"green_at_R", num(rep.green_at_R)},
          {"theta_bar", num(rep.theta_bar)},
          {"psi_at_theta_bar", num(rep.psi_at_theta_bar)},
          {"interior_root", cr.interior_root},
          {"zeta_at_R", zeta},
          {"factor_R", fR},
          {"factor_theta", fth},
          {"degenerate", degenerate},
          {"non_degenerate", rep.non_degenerate},
          {"convergent", rep.convergent},
          {"degeneracy_rank", rep.degeneracy_rank ? json(*rep.degeneracy_rank) : json(nullptr)},
          {"derivative_order", rep.derivative_order},
          {"status", to_string(rep.status)},
          {"experimental", rep.experimental},
          {"notes", rep.notes},
          {"tolerances", {{"degeneracy", rep.degeneracy_tol}, {"psi", rep.psi_tol}}},
          {"max_zeta_gap_check", num(rep.max_zeta_gap_check)}};
}

std::vector<GroupElement> parse_list(const FreeProductSpec& spec, const json& list) {
  std::vector<GroupElement> out;
  for (const auto& s : list) out.push_back(parse_element(spec, s.get<std::string>()));
  return out;
}

GroupElement default_period(const FreeProductSpec& spec) {
  GroupElement p;
  for (int i = 1; i <= spec.size(); ++i) {
    std::vector<std::int32_t> v(spec.rank(i), 0);
    v[0] = 1;
    p.append(i, v);
  }
  return p;
}

std::vector<GroupElement> generators(const FreeProductSpec& spec) {
  std::vector<GroupElement> out;
  for (int i = 1; i <= spec.size(); ++i) {
    std::vector<std::int32_t> v(spec.rank(i), 0);
    v[0] = 1;
    out.push_back(GroupElement::syllable(i, v));
  }
  return out;
}

class Run {
 public:
  Run(const ExperimentConfig& cfg, const RunOptions& opts, RunManifest& man)
      : cfg_(cfg), opts_(opts), out_(opts.out.empty() ? fs::path(cfg.output) : opts.out), cache_(opts.cache),
        man_(man), spec_(cfg.spec()) {
    fo_.mode = parse_quadrature_mode(cfg.budgets.quadrature);
    fo_.grid_nodes = cfg.budgets.grid_nodes;
    fs::create_directories(out_);
  }

  void stage(std::string name, std::vector<std::string> deps, std::function<void()> fn) {
    pipe_.add(name, std::move(deps), [this, name, fn = std::move(fn)] {
      current_ = name;
      fn();
    });
  }

  int finish() {
    const int code = pipe_.run(man_);
    std::set<std::string> failed;
    for (const auto& s : man_.stages)
      if (s.status != "ok") failed.insert(s.name);
    for (std::size_t i = 0; i < man_.artifacts.size(); ++i)
      if (failed.contains(artifact_stage_[i])) man_.artifacts[i].complete = false;
    man_.cache = cache_.stats();
    man_.cache_enabled = cache_.enabled();
    return code;
  }

  void write(const std::string& name, const std::string& bytes) {
    write_atomically(out_ / name, bytes);
    man_.artifacts.push_back({name, sha256_hex(bytes), true});
    artifact_stage_.push_back(current_);
  }
  void write(const ResultTable& t) { write(t.name() + ".csv", t.csv()); }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  GreenCalculus& calculus() {
    if (!calc_) {
      GreenCalculusOptions o;
      o.laziness = cfg_.lazy;
      o.factor = fo_;
      calc_ = std::make_unique<GreenCalculus>(cfg_.measure(), o);
      calc_->compute_R();
    }
    return *calc_;
  }

  json measure_key() const {
    json n = cfg_.normalized();
    return {{"group", n["group"]}, {"measure", n["measure"]}, {"version", artifact_version()}};
  }

  ConvolutionTable& convolution(int n_max) {
    const int depth = (n_max + 1) / 2;
    if (table_ && table_->cached() >= depth) return *table_;
    ProductMeasure base = lift(cfg_.measure());
    if (cfg_.lazy > 0.0) base = lazy(base, cfg_.lazy);
    const TableOptions topts{static_cast<std::size_t>(cfg_.budgets.max_atoms), std::max(1, opts_.jobs)};
    table_ = std::make_unique<ConvolutionTable>(base, cfg_.lazy, topts);
    json k = measure_key();
    k["depth"] = depth;
    k["max_atoms"] = cfg_.budgets.max_atoms;
    const std::string key = sha256_hex(k.dump());
    if (auto payload = cache_.get("convolution", key)) {
      try {
        if (decode_powers(*payload, *table_, spec_) == depth) return *table_;
      } catch (const Error&) {
      }
      table_ = std::make_unique<ConvolutionTable>(base, cfg_.lazy, topts);
    }
    table_->extend_to(depth);
    cache_.put("convolution", key, encode_powers(*table_));
    return *table_;
  }

  Curve cached_curve(const std::string& kind, json key, const std::function<Curve()>& make) {
    key["kind"] = kind;
    key["quadrature"] = {{"mode", cfg_.budgets.quadrature}, {"grid_nodes", cfg_.budgets.grid_nodes}};
    const std::string h = sha256_hex(key.dump());
    if (auto payload = cache_.get(kind, h)) {
      try {
        return decode_curve(*payload);
      } catch (const Error&) {
      }
    }
    Curve c = make();
    cache_.put(kind, h, encode_curve(c));
    return c;
  }

  HOptions h_options(const std::string& method, int n_lo) const {
    HOptions h;
    h.method = parse_h_method(method);
    if (h.method == HMethod::finite_n) {
      h.n_list = n_range(std::min(n_lo, cfg_.budgets.n_max), cfg_.budgets.n_max);
      h.finite_order = cfg_.params.value("finite_order", 4);
    } else {
      h.s = cfg_.params.value("s", 0);
      h.sums_order = cfg_.params.value("sums_order", 2);
    }
    return h;
  }

  std::unique_ptr<RatioLimitKernel> kernel(const std::string& method, int n_lo) {
    const HOptions h = h_options(method, n_lo);
    if (h.method == HMethod::sums) return std::make_unique<RatioLimitKernel>(&calculus(), nullptr, h);
    return std::make_unique<RatioLimitKernel>(nullptr, &convolution(cfg_.budgets.n_max), h);
  }

  std::vector<double> r_values() {
    std::vector<double> r;
    for (double f : cfg_.budgets.r_fractions) r.push_back(f * calculus().R());
    return r;
  }

  void tolerance(const std::string& name, double v) { man_.tolerances[name] = v; }

  const ExperimentConfig& cfg_;
  RunOptions opts_;
  fs::path out_;
  Cache cache_;
  RunManifest& man_;
  FreeProductSpec spec_;
  FactorGreenOptions fo_;
  Pipeline pipe_;
  std::string current_;
  std::vector<std::string> artifact_stage_;
  std::unique_ptr<GreenCalculus> calc_;
  std::unique_ptr<ConvolutionTable> table_;
};

void spectral_report(Run& run) {
  run.stage("compute-R", {}, [&] { run.calculus(); });
  run.stage("report", {"compute-R"}, [&] {
    auto& g = run.calculus();
    run.write_json("spectral_report.json", report_json(g.spectral_report(), g.compute_R()));
  });
  run.stage("zeta-curve", {"compute-R"}, [&] {
    auto& g = run.calculus();
    std::set<double> fr(run.cfg_.budgets.r_fractions.begin(), run.cfg_.budgets.r_fractions.end());
    fr.insert(1.0);
    const std::vector<double> fractions(fr.begin(), fr.end());
    json key = run.measure_key();
    key["fractions"] = fractions;
    const Curve c = run.cached_curve("zeta-curve", key, [&] {
      Curve c;
      c.x = fractions;
      c.columns.resize(2 + g.size());
      for (double f : fractions) {
        const double rb = g.base_argument(f * g.R());
        c.columns[0].push_back(rb);
        c.columns[1].push_back(g.t_of(rb));
        for (int i = 1; i <= g.size(); ++i) c.columns[1 + i].push_back(g.zeta(i, rb));
      }
      return c;
    });
    std::vector<Column> cols{{"r_fraction", "R", "requested grid"},
                             {"r", "1", "fraction times compute_R"},
                             {"r_base", "1", "lazy-to-base argument map"},
                             {"t", "1", "root of t / Phi(t) = r"}};
    for (int i = 1; i <= g.size(); ++i)
      cols.push_back({fmt::format("zeta_{}", i), "1", "zeta_i(r) = rho_i(alpha_i t)"});
    ResultTable t("zeta_curve", "GreenCalculus::zeta along r = fraction * R", cols);
    t.expect_rows(c.x.size());
    for (std::size_t j = 0; j < c.x.size(); ++j) {
      std::vector<Cell> row{c.x[j], c.x[j] * g.R(), c.columns[0][j], c.columns[1][j]};
      for (int i = 1; i <= g.size(); ++i) row.push_back(c.columns[1 + i][j]);
      t.add_row(row);
    }
    run.write(t);
  });
  run.stage("factor-green", {}, [&] {
    const auto factors = run.cfg_.factor_measures();
    const auto t_grid = run.cfg_.params["t_grid"].get<std::vector<double>>();
    ResultTable t("factor_green", "FactorGreenEvaluator::derivatives at the origin",
                  {{"factor", "1", "factor index"},
                   {"t", "1", "requested grid"},
                   {"G", "1", "factor Green function G_i(0|t)"},
                   {"G_error", "1", "quadrature error estimate"},
                   {"dG", "1", "t-derivative of G_i(0|t); inf when divergent"},
                   {"dG_error", "1", "quadrature error estimate"}});
    t.expect_rows(factors.size() * t_grid.size());
    for (std::size_t i = 0; i < factors.size(); ++i) {
      json key = run.measure_key();
      key["factor"] = i + 1;
      key["t_grid"] = t_grid;
      const Curve c = run.cached_curve("quadrature", key, [&] {
        FactorGreenEvaluator ev(factors[i], run.fo_);
        Curve c;
        c.x = t_grid;
        c.columns.resize(4);
        const std::vector<std::int32_t> origin(factors[i].rank(), 0);
        for (double tv : t_grid) {
          if (tv > 1.0) throw DomainError(fmt::format("t = {} beyond the factor radius 1", tv));
          const int order = (tv < 1.0 || ev.finite_at_one(1)) ? 1 : 0;
          const auto d = ev.derivatives(origin, tv, order);
          const double inf = std::numeric_limits<double>::infinity();
          c.columns[0].push_back(d[0].divergent ? inf : d[0].value);
          c.columns[1].push_back(d[0].error);
          c.columns[2].push_back(order == 1 && !d[1].divergent ? d[1].value : inf);
          c.columns[3].push_back(order == 1 ? d[1].error : 0.0);
        }
        return c;
      });
      for (std::size_t j = 0; j < c.x.size(); ++j)
        t.add_row({static_cast<long long>(i + 1), c.x[j], c.columns[0][j], c.columns[1][j], c.columns[2][j],
                   c.columns[3][j]});
    }
    run.write(t);
  });
}

void green_table(Run& run) {
  const auto& p = run.cfg_.params;
  const bool cross = p["cross_check"].get<bool>();
  const double tol = p["tolerance"].get<double>();
  run.tolerance("green_series_relative", tol);
  auto max_delta = std::make_shared<double>(0.0);
  auto worst = std::make_shared<std::string>();
  run.stage("compute-R", {}, [&] { run.calculus(); });
  if (cross) run.stage("convolution", {}, [&] { run.convolution(run.cfg_.budgets.n_max); });
  run.stage("green", cross ? std::vector<std::string>{"compute-R", "convolution"} : std::vector<std::string>{"compute-R"},
            [&, cross, max_delta, worst] {
              auto& g = run.calculus();
              const auto elements = p.contains("elements") ? parse_list(run.spec_, p["elements"])
                                                           : enumerate_ball(run.spec_, run.cfg_.budgets.ball_radius);
              const auto rs = run.r_values();
              std::vector<Column> cols{{"element", "-", "normal form"},
                                       {"word_length", "1", "sum of syllable l1 norms"},
                                       {"r_fraction", "R", "requested grid"},
                                       {"r", "1", "fraction times compute_R"},
                                       {"green", "1", "GreenCalculus::green (product formula)"}};
              if (cross) {
                cols.push_back({"series", "1", "direct_series_green: truncated power series plus tail model"});
                cols.push_back({"series_tail", "1", "direct_series_green tail model"});
                cols.push_back({"relative_delta", "1", "|green - series| / green"});
              }
              ResultTable t("green_table", "GreenCalculus::green with a direct-series cross-check", cols);
              t.expect_rows(elements.size() * rs.size());
              std::vector<std::vector<Cell>> rows(elements.size() * rs.size());
              parallel_for_blocks(rows.size(), run.opts_.jobs, [&](std::size_t b) {
                const auto& z = elements[b / rs.size()];
                const std::size_t j = b % rs.size();
                const double gv = g.green(z, rs[j]);
                std::vector<Cell> row{to_string(z), static_cast<long long>(word_length(z)),
                                      run.cfg_.budgets.r_fractions[j], rs[j], gv};
                if (cross) {
                  const auto s = direct_series_green(*run.table_, z, rs[j], g.R(), run.cfg_.budgets.n_max, 0);
                  row.push_back(s.value);
                  row.push_back(s.tail);
                  row.push_back(std::abs(gv - s.value) / gv);
                }
                rows[b] = std::move(row);
              });
              for (auto& row : rows) {
                if (cross && std::get<double>(row.back()) > *max_delta) {
                  *max_delta = std::get<double>(row.back());
                  *worst = fmt::format("{} at r = {}", std::get<std::string>(row[0]), std::get<double>(row[3]));
                }
                t.add_row(std::move(row));
              }
              run.write(t);
            });
  if (cross)
    run.stage("cross-check", {"green"}, [&, tol, max_delta, worst] {
      if (*max_delta > tol)
        throw NumericalInconsistency(
            fmt::format("product formula and direct series differ by {:.3g} (> {}) for {}", *max_delta, tol, *worst));
    });
}

void ratio_limit(Run& run) {
  const auto& p = run.cfg_.params;
  const bool cross = p["cross_check"].get<bool>();
  const double tol = p["tolerance"].get<double>();
  const std::string method = p["method"].get<std::string>();
  const std::string other = method == "sums" ? "finite_n" : "sums";
  if (cross) run.tolerance("route_relative", tol);
  auto max_delta = std::make_shared<double>(0.0);
  run.stage("kernel", {}, [&] {
    if (method == "sums" || cross) run.calculus();
    if (method == "finite_n" || cross) run.convolution(run.cfg_.budgets.n_max);
  });
  run.stage("ratio-limit", {"kernel"}, [&, cross, max_delta, method, other] {
    const auto xs = p.contains("x") ? parse_list(run.spec_, p["x"]) : generators(run.spec_);
    const auto ys = p.contains("y") ? parse_list(run.spec_, p["y"]) : enumerate_ball(run.spec_, 2);
    const int n_lo = p["n_lo"].get<int>();
    auto H = run.kernel(method, n_lo);
    std::unique_ptr<RatioLimitKernel> H2 = cross ? run.kernel(other, n_lo) : nullptr;
    std::vector<Column> cols{{"x", "-", "normal form"},
                             {"y", "-", "normal form"},
                             {"H", "1", fmt::format("ratio-limit kernel, route {}", method)},
                             {"error", "1", "difference of the last two extrapolants"},
                             {"last_raw", "1", "ratio at the last grid point before extrapolation"}};
    if (cross) {
      cols.push_back({"H_" + other, "1", fmt::format("ratio-limit kernel, route {}", other)});
      cols.push_back({"relative_delta", "1", "|H - H_other| / H_other"});
    }
    ResultTable t("ratio_limit", fmt::format("ratio-limit kernel H(x, y) via {}", method), cols);
    t.expect_rows(xs.size() * ys.size());
    std::vector<std::vector<Cell>> rows(xs.size() * ys.size());
    parallel_for_blocks(rows.size(), run.opts_.jobs, [&](std::size_t b) {
      const auto& x = xs[b / ys.size()];
      const auto& y = ys[b % ys.size()];
      const auto prof = H->profile(x, y);
      std::vector<Cell> row{to_string(x), to_string(y), prof.limit, prof.error,
                            prof.values.empty() ? 0.0 : prof.values.back()};
      if (cross) {
        const double h2 = H2->profile(x, y).limit;
        row.push_back(h2);
        row.push_back(std::abs(prof.limit - h2) / std::abs(h2));
      }
      rows[b] = std::move(row);
    });
    for (auto& row : rows) {
      if (cross) *max_delta = std::max(*max_delta, std::get<double>(row.back()));
      t.add_row(std::move(row));
    }
    run.write(t);
  });
  if (cross)
    run.stage("cross-check", {"ratio-limit"}, [&, tol, max_delta] {
      if (*max_delta > tol)
        throw NumericalInconsistency(
            fmt::format("ratio-limit routes differ by {:.3g} (> {})", *max_delta, tol));
    });
}

void ray_scan(Run& run) {
  const auto& p = run.cfg_.params;
  const double tol = p["tolerance"].get<double>();
  run.tolerance("ray_deviation", tol);
  run.stage("kernel", {}, [&] {
    run.calculus();
    if (p["method"] == "finite_n") run.convolution(run.cfg_.budgets.n_max);
  });
  run.stage("ray", {"kernel"}, [&, tol] {
    auto& g = run.calculus();
    auto H = run.kernel(p["method"].get<std::string>(), p["n_lo"].get<int>());
    const RaySpec ray(parse_element(run.spec_, p["head"].get<std::string>()),
                      p.contains("period") ? parse_element(run.spec_, p["period"].get<std::string>())
                                           : default_period(run.spec_));
    const auto depths = p["depths"].get<std::vector<int>>();
    std::vector<GroupElement> xs;
    for (auto& x : enumerate_ball(run.spec_, p["x_radius"].get<int>()))
      if (!x.is_identity()) xs.push_back(x);
    std::vector<RayProfile> profiles(xs.size());
    parallel_for_blocks(xs.size(), run.opts_.jobs,
                        [&](std::size_t b) { profiles[b] = hk_ratio_along_ray(g, *H, xs[b], ray, depths); });
    ResultTable t("ray_scan", "H(x, y_n) / K_R(x, y_n) along an eventually periodic ray",
                  {{"x", "-", "normal form"},
                   {"depth", "syllables", "requested depths"},
                   {"y", "-", "ray point y_n"},
                   {"ratio", "1", "ratio-limit kernel over Martin kernel at R"},
                   {"deviation", "1", "|ratio - 1|"}});
    json per_x = json::array();
    bool all = true;
    std::size_t count = 0;
    for (std::size_t b = 0; b < xs.size(); ++b) {
      const auto& pr = profiles[b];
      for (std::size_t j = 0; j < pr.depths.size(); ++j, ++count)
        t.add_row({to_string(xs[b]), static_cast<long long>(pr.depths[j]), to_string(ray.at_depth(pr.depths[j])),
                   pr.ratios[j], std::abs(pr.ratios[j] - 1.0)});
      const double first = pr.ratios.empty() ? 0.0 : std::abs(pr.ratios.front() - 1.0);
      const bool ok = !pr.partial && !pr.ratios.empty() && pr.last_deviation < tol && pr.last_deviation < first;
      all = all && ok;
      per_x.push_back({{"x", to_string(xs[b])},
                       {"first_deviation", first},
                       {"last_deviation", pr.last_deviation},
                       {"monotone", pr.monotone},
                       {"partial", pr.partial},
                       {"converged", ok},
                       {"notes", pr.notes}});
    }
    t.expect_rows(count);
    run.write(t);
    run.write_json("ray_scan.json", {{"ray", {{"head", to_string(ray.head())}, {"period", to_string(ray.period())}}},
                                     {"depths", depths},
                                     {"tolerance", tol},
                                     {"all_converged", all},
                                     {"per_x", per_x}});
  });
}

void ancona(Run& run) {
  const auto& p = run.cfg_.params;
  const double tol = p["tolerance"].get<double>();
  run.tolerance("prefix_identity", tol);
  auto prefix_error = std::make_shared<double>(0.0);
  run.stage("compute-R", {}, [&] { run.calculus(); });
  AnconaOptions o;
  o.count = p["count"].get<std::size_t>();
  o.seed = run.cfg_.seed;
  o.perturbation_radius = p["perturbation_radius"].get<int>();
  o.max_syllables = p["max_syllables"].get<int>();
  run.stage("weak", {"compute-R"}, [&, o, prefix_error] {
    auto& g = run.calculus();
    const auto rs = run.r_values();
    const auto rep = weak_ancona_scan(g, rs, o);
    ResultTable t("ancona_weak", "weak_ancona_scan: G(x,z) / (G(x,y) G(y,z)) over sampled triples",
                  {{"r_fraction", "R", "requested grid"},
                   {"r", "1", "fraction times compute_R"},
                   {"max_ratio", "1", "max over perturbed triples"},
                   {"median_ratio", "1", "median over perturbed triples"},
                   {"p90_ratio", "1", "90th percentile"},
                   {"prefix_identity_error", "1", "max |ratio G(e,e) - 1| over prefix triples"}});
    t.expect_rows(rs.size());
    for (std::size_t j = 0; j < rep.levels.size(); ++j) {
      const auto& lv = rep.levels[j];
      t.add_row({run.cfg_.budgets.r_fractions[j], lv.r, lv.max_ratio, lv.median_ratio, lv.p90_ratio,
                 lv.prefix_identity_error});
      *prefix_error = std::max(*prefix_error, lv.prefix_identity_error);
    }
    run.write(t);
    run.write_json("ancona_weak.json", {{"C_hat", rep.C_hat},
                                        {"uniformity", rep.uniformity},
                                        {"count", rep.count},
                                        {"seed", rep.seed},
                                        {"prefix_identity_error", *prefix_error}});
  });
  run.stage("strong", {"compute-R"}, [&, o] {
    auto& g = run.calculus();
    const auto depths = p["depths"].get<std::vector<int>>();
    const auto fit = strong_ancona_fit(g, depths, g.R(), o);
    ResultTable t("ancona_strong", "strong_ancona_fit: cross-ratio deviations at r = R",
                  {{"depth", "syllables", "shared geodesic length n"},
                   {"median_deviation", "1", "median |cross-ratio - 1|"},
                   {"max_deviation", "1", "max |cross-ratio - 1|"},
                   {"zero_count", "samples", "deviations at rounding level"}});
    t.expect_rows(depths.size());
    for (std::size_t j = 0; j < fit.depths.size(); ++j)
      t.add_row({static_cast<long long>(fit.depths[j]), fit.median_deviation[j], fit.max_deviation[j],
                 static_cast<long long>(fit.zero_count[j])});
    run.write(t);
    run.write_json("ancona_strong.json", {{"fitted", fit.fitted},
                                          {"C", fit.C},
                                          {"alpha", fit.alpha},
                                          {"r_squared", fit.r_squared},
                                          {"points_used", fit.points_used},
                                          {"notes", fit.notes}});
  });
  run.stage("cross-check", {"weak"}, [&, tol, prefix_error] {
    if (*prefix_error > tol)
      throw NumericalInconsistency(fmt::format("prefix-point identity off by {:.3g} (> {})", *prefix_error, tol));
  });
}

void llt(Run& run) {
  const auto& p = run.cfg_.params;
  run.stage("compute-R", {}, [&] { run.calculus(); });
  run.stage("convolution", {}, [&] { run.convolution(run.cfg_.budgets.n_max); });
  run.stage("fit", {"compute-R", "convolution"}, [&] {
    const auto x = parse_element(run.spec_, p["x"].get<std::string>());
    const auto y = parse_element(run.spec_, p["y"].get<std::string>());
    const int n_lo = p["n_lo"].get<int>();
    const int n_hi = run.cfg_.budgets.n_max;
    if (n_lo >= n_hi) throw ConfigError("/params/n_lo: must be below budgets.n_max");
    const double R = run.calculus().R();
    const auto& table = *run.table_;
    const auto fit = llt_fit(table, x, y, n_lo, n_hi, R, p["corrections"].get<int>(), p["richardson_order"].get<int>());
    ResultTable t("llt_series", "ConvolutionTable::transition rescaled by R^n",
                  {{"n", "steps", "requested range"},
                   {"p", "1", "P^n(x, y)"},
                   {"p_scaled", "1", "P^n(x, y) R^n"}});
    t.expect_rows(static_cast<std::size_t>(n_hi - n_lo + 1));
    for (int n = n_lo; n <= n_hi; ++n) {
      const double pn = table.transition(x, y, n);
      t.add_row({static_cast<long long>(n), pn, pn * std::pow(R, n)});
    }
    run.write(t);
    run.write_json("llt_fit.json", {{"exponent", fit.exponent},
                                    {"exponent_error", fit.exponent_error},
                                    {"exponent_ls", fit.exponent_ls},
                                    {"exponent_ls_error", fit.exponent_ls_error},
                                    {"coefficient", fit.coefficient},
                                    {"R", fit.R_used},
                                    {"residual", fit.residual},
                                    {"points", fit.points}});
  });
}

void radical(Run& run) {
  const auto& p = run.cfg_.params;
  const double tol = p["tolerance"].get<double>();
  run.tolerance("radical", tol);
  run.stage("kernel", {}, [&] {
    run.calculus();
    if (p["method"] == "finite_n") run.convolution(run.cfg_.budgets.n_max);
  });
  run.stage("scan", {"kernel"}, [&, tol] {
    auto H = run.kernel(p["method"].get<std::string>(), p["n_lo"].get<int>());
    const auto test_x = enumerate_ball(run.spec_, p["test_radius"].get<int>());
    const Kernel k = [&](const GroupElement& x, const GroupElement& y) { return (*H)(x, y); };
    const auto scan = radical_scan(run.spec_, run.cfg_.budgets.ball_radius, k, test_x, tol);
    ResultTable t("radical_scan", "radical_scan: max_x |H(x, g) - H(x, e)| over a ball",
                  {{"element", "-", "normal form g"},
                   {"deviation", "1", "max over test points x"},
                   {"candidate", "-", "deviation below tolerance"}});
    t.expect_rows(scan.elements.size());
    for (std::size_t i = 0; i < scan.elements.size(); ++i)
      t.add_row({to_string(scan.elements[i]), scan.deviation[i], scan.deviation[i] <= tol});
    run.write(t);
    json cands = json::array();
    for (const auto& c : scan.candidates) cands.push_back(to_string(c));
    run.write_json("radical.json", {{"ball_radius", scan.ball_radius},
                                    {"tolerance", tol},
                                    {"candidates", cands},
                                    {"trivial", scan.candidates.size() == 1 && scan.candidates[0].is_identity()}});
  });
}

void reproduce_z5z(Run& run) {
  const auto& p = run.cfg_.params;
  const double lo = p["alpha_lo"].get<double>();
  const double hi = p["alpha_hi"].get<double>();
  const double width = p["bracket_width"].get<double>();
  run.tolerance("bracket_width", width);
  auto bracket = std::make_shared<std::optional<std::pair<double, double>>>();
  run.stage("sweep", {}, [&, lo, hi, bracket] {
    const auto tune = tune_alpha(run.cfg_.factor_measures(), run.spec_, p["steps"].get<int>(), lo, hi, run.fo_);
    ResultTable t("alpha_sweep", "tune_alpha: Psi(theta_bar) over the alpha_1 grid",
                  {{"alpha_1", "1", "requested grid"},
                   {"alpha_2", "1", "1 - alpha_1"},
                   {"psi_at_theta_bar", "1", "Psi(theta_bar); negative means non-degenerate"},
                   {"non_degenerate", "-", "sign of Psi(theta_bar)"}});
    t.expect_rows(static_cast<std::size_t>(p["steps"].get<int>()));
    for (const auto& pt : tune.grid)
      t.add_row({pt.alpha[0], pt.alpha[1], pt.psi_at_theta_bar, pt.non_degenerate});
    run.write(t);
    *bracket = tune.bracket;
  });
  run.stage("bracket", {"sweep"}, [&, width, bracket] {
    json b = nullptr;
    if (*bracket) {
      const auto r = refine_alpha_bracket(run.cfg_.factor_measures(), run.spec_, (*bracket)->first,
                                          (*bracket)->second, width, run.fo_);
      b = {r.first, r.second};
    }
    run.write_json("alpha_bracket.json", {{"bracket", b}, {"width_target", width}});
  });
  run.stage("endpoints", {"sweep"}, [&, lo, hi] {
    json ends = json::array();
    for (double a : {lo, hi}) {
      GreenCalculusOptions o;
      o.laziness = run.cfg_.lazy;
      o.factor = run.fo_;
      GreenCalculus g(run.cfg_.measure({a, 1.0 - a}), o);
      json r = report_json(g.spectral_report(), g.compute_R());
      r["alpha_1"] = a;
      ends.push_back(r);
    }
    run.write_json("endpoints.json", {{"endpoints", ends}});
  });
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  RunResult res;
  auto& man = res.manifest;
  man.config_hash = cfg.hash();
  man.version = artifact_version();
  man.experiment = cfg.experiment;
  man.seed = cfg.seed;
  man.warnings = cfg.warnings;
  const fs::path out = options.out.empty() ? fs::path(cfg.output) : options.out;
  std::error_code ec;
  fs::remove(out / "manifest.json", ec);  // a stale marker must not outlive a new run
  Run run(cfg, options, man);
  const std::string& e = cfg.experiment;
  if (e == "spectral-report")
    spectral_report(run);
  else if (e == "green-table")
    green_table(run);
  else if (e == "ratio-limit")
    ratio_limit(run);
  else if (e == "ray-scan")
    ray_scan(run);
  else if (e == "ancona")
    ancona(run);
  else if (e == "llt-fit")
    llt(run);
  else if (e == "radical")
    radical(run);
  else if (e == "reproduce-z5z")
    reproduce_z5z(run);
  else
    throw ConfigError(fmt::format("'{}' is not a runnable experiment", e));
  run.write_json("config.normalized.json", cfg.normalized());
  res.exit_code = run.finish();
  write_atomically(out / "manifest.json", man.to_json().dump(2) + "\n");
  return res;
}

}  // namespace freewalk::tools

namespace freewalk::tools {

int run_selftest(std::ostream& log, const fs::path& scratch) {
  int failures = 0;
  auto check = [&](const std::string& what, double got, double want, double tol) {
    const bool ok = std::abs(got - want) <= tol;
    log << fmt::format("{} {}: got {:.12g}, want {:.12g} (tol {:g})\n", ok ? "PASS" : "FAIL", what, got, want, tol);
    failures += ok ? 0 : 1;
  };
  const auto spec = FreeProductSpec::lattice({1, 1});
  GreenCalculus g(AdaptedMeasure::simple(spec, {0.5, 0.5}));
  check("F2 spectral radius inverse", g.R(), 2.0 / std::sqrt(3.0), 1e-9);
  check("F2 G(e,e|R)", g.compute_R().green_at_R, 3.0, 1e-9);
  check("F2 G(e,e|1)", g.green(GroupElement{}, 1.0), 1.5, 1e-9);

  FactorGreenEvaluator z3(LatticeMeasure::simple(1, 3));
  check("Z3 G(0|1)", z3.green({0, 0, 0}, 1.0).value, 1.516386059151978, 1e-8);

  Cache cache(scratch / "selftest-cache");
  ConvolutionTable table(lift(AdaptedMeasure::simple(spec, {0.5, 0.5})));
  table.extend_to(4);
  const std::string payload = encode_powers(table);
  cache.put("convolution", "selftest", payload);
  const auto back = cache.get("convolution", "selftest");
  const bool round = back && *back == payload;
  log << fmt::format("{} cache round trip\n", round ? "PASS" : "FAIL");
  failures += round ? 0 : 1;
  ConvolutionTable restored(table.base());
  decode_powers(*back, restored, spec);
  check("restored P^8(e,e)", restored.transition(GroupElement{}, 8), table.transition(GroupElement{}, 8), 0.0);
  return failures ? kInconsistent : kOk;
}

}  // namespace freewalk::tools
