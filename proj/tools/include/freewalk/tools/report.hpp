#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "freewalk/tools/cache.hpp"

namespace freewalk::tools {

using nlohmann::json;

struct Column {
  std::string name;
  std::string unit;        // "1" for dimensionless
  std::string provenance;  // operation that produced the column
};

using Cell = std::variant<double, long long, std::string, bool>;

// CSV table with a commented header naming the producing operation and each column's source.
class ResultTable {
 public:
  ResultTable(std::string name, std::string operation, std::vector<Column> columns);
  void add_row(std::vector<Cell> row);
  // Row count the requested grid implies; checked on write.
  void expect_rows(std::size_t n) { expected_ = n; }
  std::size_t rows() const { return rows_.size(); }
  const std::string& name() const { return name_; }
  std::string csv() const;

 private:
  std::string name_;
  std::string operation_;
  std::vector<Column> columns_;
  std::vector<std::vector<std::string>> rows_;
  std::optional<std::size_t> expected_;
};

std::string format_cell(const Cell& c);

struct StageRecord {
  std::string name;
  std::vector<std::string> depends_on;
  std::string status = "pending";  // ok, failed, skipped
  double seconds = 0.0;
  std::string error;
  int exit_code = 0;
};

struct ArtifactRecord {
  std::string path;
  std::string sha256;
  bool complete = true;
};

struct RunManifest {
  std::string config_hash;
  std::string version;
  std::string experiment;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::vector<StageRecord> stages;
  std::vector<ArtifactRecord> artifacts;
  CacheStats cache;
  bool cache_enabled = false;
  std::map<std::string, double> tolerances;
  std::vector<std::string> warnings;
  json to_json() const;
};

// Writes `bytes` to dir/name through a temporary file and rename.
void write_atomically(const std::filesystem::path& path, std::string_view bytes);

// Stages run in declaration order; a stage whose dependency did not succeed is skipped.
class Pipeline {
 public:
  using Fn = std::function<void()>;
  void add(std::string name, std::vector<std::string> depends_on, Fn fn);
  // Runs every stage; returns the exit code of the first failure (0 if none).
  int run(RunManifest& manifest);

 private:
  struct Stage {
    std::string name;
    std::vector<std::string> deps;
    Fn fn;
  };
  std::vector<Stage> stages_;
};

// Exit codes shared by the CLI and the pipeline.
enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kBudgetExceeded = 3, kInconsistent = 4 };
int exit_code_for_current_exception(std::string& message);

}  // namespace freewalk::tools
