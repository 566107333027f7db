#include "freewalk/tools/config.hpp"

#include "freewalk/factor_green.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <sstream>

namespace freewalk::tools {

namespace {

std::string join_issues(const std::vector<SchemaIssue>& issues) {
  std::string s = "invalid experiment config:";
  for (const auto& i : issues) s += fmt::format("\n  {}: {}", i.pointer.empty() ? "/" : i.pointer, i.message);
  return s;
}

enum class ParamType { integer, number, string, boolean, integer_list, number_list, string_list };

struct ParamSpec {
  std::string name;
  ParamType type;
  json fallback;  // null: derived from budgets or group at parse time
  bool positive = false;
};

const char* type_name(ParamType t) {
  switch (t) {
    case ParamType::integer: return "an integer";
    case ParamType::number: return "a number";
    case ParamType::string: return "a string";
    case ParamType::boolean: return "a boolean";
    case ParamType::integer_list: return "an array of integers";
    case ParamType::number_list: return "an array of numbers";
    case ParamType::string_list: return "an array of strings";
  }
  return "?";
}

bool has_type(const json& v, ParamType t) {
  auto all = [&](auto pred) {
    if (!v.is_array()) return false;
    for (const auto& e : v)
      if (!pred(e)) return false;
    return true;
  };
  switch (t) {
    case ParamType::integer: return v.is_number_integer();
    case ParamType::number: return v.is_number();
    case ParamType::string: return v.is_string();
    case ParamType::boolean: return v.is_boolean();
    case ParamType::integer_list: return all([](const json& e) { return e.is_number_integer(); });
    case ParamType::number_list: return all([](const json& e) { return e.is_number(); });
    case ParamType::string_list: return all([](const json& e) { return e.is_string(); });
  }
  return false;
}

bool is_positive(const json& v) {
  if (v.is_number()) return v.get<double>() > 0.0;
  if (v.is_array()) {
    for (const auto& e : v)
      if (e.is_number() && !(e.get<double>() > 0.0)) return false;
  }
  return true;
}

const std::map<std::string, std::vector<ParamSpec>>& param_specs() {
  using P = ParamType;
  static const std::map<std::string, std::vector<ParamSpec>> specs = {
      {"validate", {}},
      {"selftest", {}},
      {"spectral-report", {{"t_grid", P::number_list, json::array({0.25, 0.5, 0.75, 0.9, 1.0}), true}}},
      {"green-table",
       {{"elements", P::string_list, nullptr},
        {"cross_check", P::boolean, true},
        {"tolerance", P::number, 0.01, true}}},
      {"ratio-limit",
       {{"method", P::string, "sums"},
        {"x", P::string_list, nullptr},
        {"y", P::string_list, nullptr},
        {"n_lo", P::integer, 10, true},
        {"finite_order", P::integer, 4, true},
        {"s", P::integer, 0},
        {"sums_order", P::integer, 2, true},
        {"cross_check", P::boolean, false},
        {"tolerance", P::number, 0.03, true}}},
      {"ray-scan",
       {{"method", P::string, "sums"},
        {"head", P::string, "e"},
        {"period", P::string, nullptr},
        {"depths", P::integer_list, json::array({2, 4, 6, 8}), true},
        {"x_radius", P::integer, 2, true},
        {"n_lo", P::integer, 10, true},
        {"tolerance", P::number, 0.05, true}}},
      {"ancona",
       {{"count", P::integer, 200, true},
        {"depths", P::integer_list, json::array({2, 3, 4, 5, 6, 7, 8}), true},
        {"perturbation_radius", P::integer, 2, true},
        {"max_syllables", P::integer, 6, true},
        {"tolerance", P::number, 1e-10, true}}},
      {"llt-fit",
       {{"x", P::string, "e"},
        {"y", P::string, "e"},
        {"n_lo", P::integer, 4, true},
        {"corrections", P::integer, 2},
        {"richardson_order", P::integer, 3, true}}},
      {"radical",
       {{"method", P::string, "sums"},
        {"test_radius", P::integer, 2, true},
        {"n_lo", P::integer, 10, true},
        {"tolerance", P::number, 1e-2, true}}},
      {"reproduce-z5z",
       {{"alpha_lo", P::number, 0.05, true},
        {"alpha_hi", P::number, 0.95, true},
        {"steps", P::integer, 9, true},
        {"bracket_width", P::number, 0.05, true}}},
  };
  return specs;
}

class Checker {
 public:
  explicit Checker(bool strict) : strict_(strict) {}
  void fail(std::string pointer, std::string message) { issues_.push_back({std::move(pointer), std::move(message)}); }
  void warn(const std::string& pointer, const std::string& message, ExperimentConfig& cfg) {
    if (strict_)
      fail(pointer, message + " (strict mode)");
    else
      cfg.warnings.push_back(fmt::format("{}: {}", pointer, message));
  }
  void unknown_keys(const json& obj, const std::string& base, std::initializer_list<const char*> known,
                    ExperimentConfig& cfg) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool ok = false;
      for (const char* k : known) ok = ok || it.key() == k;
      if (!ok) warn(base + "/" + it.key(), "unknown key", cfg);
    }
  }
  bool strict() const { return strict_; }
  std::vector<SchemaIssue>& issues() { return issues_; }

 private:
  bool strict_;
  std::vector<SchemaIssue> issues_;
};

template <class T>
bool read_positive(const json& obj, const char* key, const std::string& base, T& out, Checker& c) {
  if (!obj.contains(key)) return false;
  const json& v = obj[key];
  const std::string ptr = base + "/" + key;
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) {
      c.fail(ptr, "must be an integer");
      return false;
    }
  } else {
    if (!v.is_number()) {
      c.fail(ptr, "must be a number");
      return false;
    }
  }
  const T value = v.get<T>();
  if (!(value > T(0))) {
    c.fail(ptr, fmt::format("must be positive (got {})", v.dump()));
    return false;
  }
  out = value;
  return true;
}

// Normalizes positive weights; returns false when unusable.
bool normalize_weights(std::vector<double>& w, const std::string& ptr, Checker& c, ExperimentConfig& cfg) {
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i] > 0.0) || !std::isfinite(w[i])) {
      c.fail(fmt::format("{}/{}", ptr, i), "weight must be positive");
      return false;
    }
    sum += w[i];
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    c.warn(ptr, fmt::format("weights sum to {} and were normalized", sum), cfg);
    for (auto& x : w) x /= sum;
  }
  return true;
}

void parse_factor(const json& f, std::size_t i, int rank, Checker& c, ExperimentConfig& cfg) {
  const std::string ptr = fmt::format("/measure/factors/{}", i);
  FactorDescription d;
  if (f.is_string()) {
    if (f.get<std::string>() != "simple") c.fail(ptr, "string factors must be \"simple\"");
  } else if (f.is_object() && f.contains("holding")) {
    c.unknown_keys(f, ptr, {"holding"}, cfg);
    d.kind = FactorDescription::Kind::holding;
    if (!f["holding"].is_number() || f["holding"].get<double>() < 0.0 || f["holding"].get<double>() >= 1.0)
      c.fail(ptr + "/holding", "must be a number in [0, 1)");
    else
      d.holding = f["holding"].get<double>();
  } else if (f.is_object() && f.contains("atoms")) {
    c.unknown_keys(f, ptr, {"atoms"}, cfg);
    d.kind = FactorDescription::Kind::atoms;
    const json& atoms = f["atoms"];
    if (!atoms.is_array() || atoms.empty()) {
      c.fail(ptr + "/atoms", "must be a non-empty array");
    } else {
      std::vector<double> w;
      for (std::size_t j = 0; j < atoms.size(); ++j) {
        const std::string ap = fmt::format("{}/atoms/{}", ptr, j);
        const json& a = atoms[j];
        if (!a.is_object() || !a.contains("v") || !a.contains("p")) {
          c.fail(ap, "atom needs \"v\" and \"p\"");
          continue;
        }
        c.unknown_keys(a, ap, {"v", "p"}, cfg);
        if (!has_type(a["v"], ParamType::integer_list) || static_cast<int>(a["v"].size()) != rank) {
          c.fail(ap + "/v", fmt::format("must be an integer vector of length {}", rank));
          continue;
        }
        if (!a["p"].is_number()) {
          c.fail(ap + "/p", "must be a number");
          continue;
        }
        d.atoms.push_back({a["v"].get<std::vector<std::int32_t>>(), a["p"].get<double>()});
        w.push_back(d.atoms.back().p);
      }
      if (w.size() == atoms.size() && normalize_weights(w, ptr + "/atoms", c, cfg))
        for (std::size_t j = 0; j < w.size(); ++j) d.atoms[j].p = w[j];
    }
  } else {
    c.fail(ptr, "factor must be \"simple\", {\"holding\": h} or {\"atoms\": [...]}");
  }
  cfg.factors.push_back(std::move(d));
}

void parse_params(const json& doc, Checker& c, ExperimentConfig& cfg) {
  const auto& specs = param_specs().at(cfg.experiment);
  json given = doc.contains("params") ? doc["params"] : json::object();
  if (!given.is_object()) {
    c.fail("/params", "must be an object");
    given = json::object();
  }
  for (auto it = given.begin(); it != given.end(); ++it) {
    bool known = false;
    for (const auto& s : specs) known = known || s.name == it.key();
    if (!known) c.warn("/params/" + it.key(), fmt::format("unknown parameter for '{}'", cfg.experiment), cfg);
  }
  json out = json::object();
  for (const auto& s : specs) {
    const std::string ptr = "/params/" + s.name;
    if (given.contains(s.name)) {
      const json& v = given[s.name];
      if (!has_type(v, s.type)) {
        c.fail(ptr, fmt::format("must be {}", type_name(s.type)));
        continue;
      }
      if (s.positive && !is_positive(v)) {
        c.fail(ptr, "must be positive");
        continue;
      }
      out[s.name] = v;
    } else if (!s.fallback.is_null()) {
      out[s.name] = s.fallback;
    }
  }
  for (const char* m : {"method"})
    if (out.contains(m) && out[m] != "sums" && out[m] != "finite_n")
      c.fail(std::string("/params/") + m, "must be \"sums\" or \"finite_n\"");
  if (out.contains("alpha_lo") && out.contains("alpha_hi") &&
      !(out["alpha_lo"].get<double>() < out["alpha_hi"].get<double>() && out["alpha_hi"].get<double>() < 1.0))
    c.fail("/params", "need 0 < alpha_lo < alpha_hi < 1");
  if (out.contains("steps") && out["steps"].get<int>() < 2) c.fail("/params/steps", "need at least 2 points");
  cfg.params = std::move(out);
}

}  // namespace

ConfigSchemaError::ConfigSchemaError(std::vector<SchemaIssue> issues)
    : ConfigError(join_issues(issues)), issues_(std::move(issues)) {}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, _] : param_specs()) v.push_back(k);
    return v;
  }();
  return names;
}

ExperimentConfig parse_config(const json& doc, const ParseOptions& options) {
  Checker c(options.strict);
  ExperimentConfig cfg;
  if (!doc.is_object()) throw ConfigSchemaError(std::vector<SchemaIssue>{{"", "config must be a JSON object"}});
  c.unknown_keys(doc, "", {"experiment", "group", "measure", "budgets", "params", "seed", "output", "$schema"}, cfg);

  // experiment selector
  if (doc.contains("experiment")) {
    if (!doc["experiment"].is_string())
      c.fail("/experiment", "must be a string");
    else
      cfg.experiment = doc["experiment"].get<std::string>();
  }
  if (!options.experiment.empty()) {
    if (!cfg.experiment.empty() && cfg.experiment != options.experiment && options.experiment != "validate")
      c.fail("/experiment", fmt::format("config selects '{}' but '{}' was requested", cfg.experiment,
                                        options.experiment));
    if (cfg.experiment.empty()) cfg.experiment = options.experiment;
  }
  if (cfg.experiment.empty()) cfg.experiment = "validate";
  if (!param_specs().contains(cfg.experiment)) {
    c.fail("/experiment", fmt::format("unknown experiment '{}'", cfg.experiment));
    cfg.experiment = "validate";
  }

  // group
  if (!doc.contains("group") || !doc["group"].is_object()) {
    c.fail("/group", "required object with \"ranks\"");
  } else {
    const json& g = doc["group"];
    c.unknown_keys(g, "/group", {"ranks"}, cfg);
    if (!has_type(g.value("ranks", json()), ParamType::integer_list) || g["ranks"].size() < 2) {
      c.fail("/group/ranks", "must be an array of at least two integers");
    } else {
      for (std::size_t i = 0; i < g["ranks"].size(); ++i) {
        const int r = g["ranks"][i].get<int>();
        if (r < 1) c.fail(fmt::format("/group/ranks/{}", i), "rank must be positive");
        cfg.ranks.push_back(r);
      }
    }
  }

  // measure
  if (doc.contains("measure") && !doc["measure"].is_object()) {
    c.fail("/measure", "must be an object");
  } else {
    const json m = doc.value("measure", json::object());
    c.unknown_keys(m, "/measure", {"weights", "factors", "lazy"}, cfg);
    const std::size_t k = cfg.ranks.size();
    if (m.contains("weights")) {
      if (!has_type(m["weights"], ParamType::number_list) || m["weights"].size() != k) {
        c.fail("/measure/weights", fmt::format("must be an array of {} numbers", k));
      } else {
        cfg.weights = m["weights"].get<std::vector<double>>();
        normalize_weights(cfg.weights, "/measure/weights", c, cfg);
      }
    } else {
      cfg.weights.assign(k, k ? 1.0 / k : 0.0);
    }
    if (m.contains("factors")) {
      if (!m["factors"].is_array() || m["factors"].size() != k) {
        c.fail("/measure/factors", fmt::format("must be an array of {} factor descriptions", k));
      } else {
        for (std::size_t i = 0; i < k; ++i) parse_factor(m["factors"][i], i, cfg.ranks[i], c, cfg);
      }
    } else {
      cfg.factors.assign(k, FactorDescription{});
    }
    if (m.contains("lazy")) {
      if (!m["lazy"].is_number() || m["lazy"].get<double>() < 0.0 || m["lazy"].get<double>() >= 1.0)
        c.fail("/measure/lazy", "must be a number in [0, 1)");
      else
        cfg.lazy = m["lazy"].get<double>();
    }
  }

  // budgets
  if (doc.contains("budgets")) {
    const json& b = doc["budgets"];
    if (!b.is_object()) {
      c.fail("/budgets", "must be an object");
    } else {
      c.unknown_keys(b, "/budgets", {"ball_radius", "n_max", "r_fractions", "grid_nodes", "quadrature", "max_atoms"},
                     cfg);
      read_positive(b, "ball_radius", "/budgets", cfg.budgets.ball_radius, c);
      if (read_positive(b, "n_max", "/budgets", cfg.budgets.n_max, c) &&
          cfg.budgets.n_max > 2 * ConvolutionTable::kMaxPowers)
        c.fail("/budgets/n_max", fmt::format("at most {}", 2 * ConvolutionTable::kMaxPowers));
      read_positive(b, "grid_nodes", "/budgets", cfg.budgets.grid_nodes, c);
      read_positive(b, "max_atoms", "/budgets", cfg.budgets.max_atoms, c);
      if (b.contains("r_fractions")) {
        if (!has_type(b["r_fractions"], ParamType::number_list) || b["r_fractions"].empty()) {
          c.fail("/budgets/r_fractions", "must be a non-empty array of numbers");
        } else {
          cfg.budgets.r_fractions = b["r_fractions"].get<std::vector<double>>();
          for (std::size_t i = 0; i < cfg.budgets.r_fractions.size(); ++i) {
            const double f = cfg.budgets.r_fractions[i];
            if (!(f > 0.0 && f <= 1.0)) c.fail(fmt::format("/budgets/r_fractions/{}", i), "must lie in (0, 1]");
          }
        }
      }
      if (b.contains("quadrature")) {
        try {
          if (!b["quadrature"].is_string()) throw ConfigError("");
          parse_quadrature_mode(b["quadrature"].get<std::string>());
          cfg.budgets.quadrature = b["quadrature"].get<std::string>();
        } catch (const Error&) {
          c.fail("/budgets/quadrature", "must be one of auto, laplace, grid, series");
        }
      }
    }
  }

  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer() || doc["seed"].get<std::int64_t>() < 0)
      c.fail("/seed", "must be a non-negative integer");
    else
      cfg.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("output")) {
    if (!doc["output"].is_string() || doc["output"].get<std::string>().empty())
      c.fail("/output", "must be a non-empty string");
    else
      cfg.output = doc["output"].get<std::string>();
  }

  parse_params(doc, c, cfg);

  // Semantic checks once the shape is right: the measures must be admissible lattice measures.
  if (c.issues().empty()) {
    const auto spec = cfg.spec();
    for (int i = 1; i <= spec.size(); ++i) {
      try {
        const auto lm = cfg.factor_measures()[i - 1];
        if (!lm.generates_lattice())
          c.fail(fmt::format("/measure/factors/{}", i - 1), "support does not generate the lattice");
        if (!lm.is_symmetric()) c.fail(fmt::format("/measure/factors/{}", i - 1), "measure is not symmetric");
      } catch (const Error& e) {
        c.fail(fmt::format("/measure/factors/{}", i - 1), e.what());
      }
    }
    for (const char* key : {"elements", "x", "y"}) {
      if (!cfg.params.contains(key) || !cfg.params[key].is_array()) continue;
      for (std::size_t i = 0; i < cfg.params[key].size(); ++i) {
        try {
          parse_element(spec, cfg.params[key][i].get<std::string>());
        } catch (const Error& e) {
          c.fail(fmt::format("/params/{}/{}", key, i), e.what());
        }
      }
    }
    for (const char* key : {"head", "period", "x", "y"}) {
      if (!cfg.params.contains(key) || !cfg.params[key].is_string()) continue;
      try {
        const auto g = parse_element(spec, cfg.params[key].get<std::string>());
        if (std::string(key) == "period" && g.syllable_count() < 1) c.fail("/params/period", "must be non-trivial");
      } catch (const Error& e) {
        c.fail(std::string("/params/") + key, e.what());
      }
    }
    if (cfg.experiment == "reproduce-z5z" && cfg.ranks.size() != 2)
      c.fail("/group/ranks", "the alpha sweep needs exactly two factors");
  }
  if (!c.issues().empty()) throw ConfigSchemaError(std::move(c.issues()));
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw ConfigSchemaError(std::vector<SchemaIssue>{{"", fmt::format("cannot read '{}'", path.string())}});
  json doc;
  try {
    doc = json::parse(in, nullptr, true, false);
  } catch (const json::parse_error& e) {
    throw ConfigSchemaError(std::vector<SchemaIssue>{{"", fmt::format("'{}' is not valid JSON: {}", path.string(), e.what())}});
  }
  return parse_config(doc, options);
}

json ExperimentConfig::normalized() const {
  json factors_json = json::array();
  for (const auto& f : factors) {
    switch (f.kind) {
      case FactorDescription::Kind::simple: factors_json.push_back("simple"); break;
      case FactorDescription::Kind::holding: factors_json.push_back({{"holding", f.holding}}); break;
      case FactorDescription::Kind::atoms: {
        json atoms = json::array();
        for (const auto& a : f.atoms) atoms.push_back({{"v", a.v}, {"p", a.p}});
        factors_json.push_back({{"atoms", atoms}});
        break;
      }
    }
  }
  return {{"experiment", experiment},
          {"group", {{"ranks", ranks}}},
          {"measure", {{"weights", weights}, {"factors", factors_json}, {"lazy", lazy}}},
          {"budgets",
           {{"ball_radius", budgets.ball_radius},
            {"n_max", budgets.n_max},
            {"r_fractions", budgets.r_fractions},
            {"grid_nodes", budgets.grid_nodes},
            {"quadrature", budgets.quadrature},
            {"max_atoms", budgets.max_atoms}}},
          {"params", params},
          {"seed", seed},
          {"output", output}};
}

std::string ExperimentConfig::hash() const {
  json n = normalized();
  n.erase("output");
  return sha256_hex(n.dump());
}

FreeProductSpec ExperimentConfig::spec() const { return FreeProductSpec::lattice(ranks); }

std::vector<LatticeMeasure> ExperimentConfig::factor_measures() const {
  std::vector<LatticeMeasure> out;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const int idx = static_cast<int>(i) + 1;
    const auto& f = factors[i];
    switch (f.kind) {
      case FactorDescription::Kind::simple: out.push_back(LatticeMeasure::simple(idx, ranks[i])); break;
      case FactorDescription::Kind::holding: out.push_back(LatticeMeasure::simple(idx, ranks[i], f.holding)); break;
      case FactorDescription::Kind::atoms: out.emplace_back(idx, ranks[i], f.atoms, true); break;
    }
  }
  return out;
}

AdaptedMeasure ExperimentConfig::measure(const std::vector<double>& w) const {
  return AdaptedMeasure(spec(), w, factor_measures());
}

AdaptedMeasure ExperimentConfig::measure() const { return measure(weights); }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace freewalk::tools
