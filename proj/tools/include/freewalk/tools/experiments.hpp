#pragma once

#include <filesystem>
#include <ostream>
#include <string>

#include "freewalk/tools/config.hpp"
#include "freewalk/tools/report.hpp"

namespace freewalk::tools {

struct RunOptions {
  std::filesystem::path out;    // overrides config.output when set
  std::filesystem::path cache;  // empty: no cache
  int jobs = 1;
};

struct RunResult {
  RunManifest manifest;
  int exit_code = 0;
};

// Runs the experiment named by config.experiment, writes tables and reports under the output
// directory, and writes manifest.json last.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options);

const char* artifact_version();

// Quick end-to-end checks against closed forms plus a cache round trip in `scratch`.
// Returns an exit code.
int run_selftest(std::ostream& log, const std::filesystem::path& scratch);

}  // namespace freewalk::tools
