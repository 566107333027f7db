#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "freewalk/errors.hpp"
#include "freewalk/measures.hpp"

namespace freewalk::tools {

using nlohmann::json;

struct SchemaIssue {
  std::string pointer;  // JSON pointer into the config document
  std::string message;
};

// All schema violations found in one pass.
class ConfigSchemaError : public ConfigError {
 public:
  explicit ConfigSchemaError(std::vector<SchemaIssue> issues);
  const std::vector<SchemaIssue>& issues() const { return issues_; }

 private:
  std::vector<SchemaIssue> issues_;
};

struct FactorDescription {
  enum class Kind { simple, holding, atoms };
  Kind kind = Kind::simple;
  double holding = 0.0;
  std::vector<LatticeAtom> atoms;
};

struct Budgets {
  int ball_radius = 3;
  int n_max = 14;
  std::vector<double> r_fractions{0.5, 0.8, 0.95};
  int grid_nodes = 0;  // 0: per-dimension default
  std::string quadrature = "auto";
  std::int64_t max_atoms = 50'000'000;
};

struct ExperimentConfig {
  std::string experiment;
  std::vector<int> ranks;
  std::vector<double> weights;
  std::vector<FactorDescription> factors;
  double lazy = 0.0;
  Budgets budgets;
  json params = json::object();  // defaults filled for the selected experiment
  std::uint64_t seed = 1;
  std::string output = "out";
  std::vector<std::string> warnings;

  // Canonical form with every default filled; the hash covers everything except `output`.
  json normalized() const;
  std::string hash() const;

  FreeProductSpec spec() const;
  AdaptedMeasure measure() const;
  AdaptedMeasure measure(const std::vector<double>& weights) const;
  std::vector<LatticeMeasure> factor_measures() const;
};

struct ParseOptions {
  bool strict = false;
  std::string experiment;  // when set, must match (or fill) the config's selector
};

const std::vector<std::string>& experiment_names();

ExperimentConfig parse_config(const json& doc, const ParseOptions& options = {});
ExperimentConfig parse_config(const std::filesystem::path& path, const ParseOptions& options = {});

// Hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace freewalk::tools
