#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>

#include "freewalk/tools/config.hpp"
#include "freewalk/tools/experiments.hpp"

namespace fs = std::filesystem;
using namespace freewalk::tools;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string cache;
  std::optional<std::uint64_t> seed;
  bool strict = false;
  int jobs = 1;
};

void add_flags(CLI::App* cmd, Flags& f, bool needs_config) {
  auto* c = cmd->add_option("--config", f.config, "Experiment config (JSON)");
  if (needs_config) c->required();
  cmd->add_option("--out", f.out, "Output directory (overrides the config)");
  cmd->add_option("--cache", f.cache, "Cache directory for heavy intermediates");
  cmd->add_option("--seed", f.seed, "Seed (overrides the config)");
  cmd->add_flag("--strict", f.strict, "Treat unknown keys and unnormalized weights as errors");
  cmd->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

ExperimentConfig load(const Flags& f, const std::string& verb) {
  ParseOptions po;
  po.strict = f.strict;
  po.experiment = verb;
  auto cfg = parse_config(fs::path(f.config), po);
  if (f.seed) cfg.seed = *f.seed;
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"freewalk: Green functions and boundaries of random walks on free products of lattices"};
  app.require_subcommand(1);
  app.set_version_flag("--version", artifact_version());

  Flags flags;
  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"validate", "Check a config against the schema and print it with defaults filled"},
      {"spectral-report", "R, theta, zeta_i(R) and the degeneracy classification"},
      {"green-table", "G(e, y|r) over a ball and r-grid, cross-checked against the power series"},
      {"ratio-limit", "Ratio-limit kernel H(x, y) by the finite-n or iterated-sum route"},
      {"ray-scan", "H / K_R along an eventually periodic ray"},
      {"ancona", "Weak and strong Ancona statistics"},
      {"llt-fit", "Local limit exponent from return probabilities"},
      {"radical", "Elements g with H(., g) = H(., e) in a ball"},
      {"reproduce-z5z", "Psi(theta_bar) over the alpha grid with a sign-change bracket"},
      {"selftest", "Closed-form checks and a cache round trip"},
  };
  std::vector<CLI::App*> cmds;
  for (const auto& [name, help] : verbs) {
    auto* cmd = app.add_subcommand(name, help);
    add_flags(cmd, flags, name != "selftest");
    cmds.push_back(cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  std::string verb;
  for (auto* c : cmds)
    if (c->parsed()) verb = c->get_name();

  try {
    if (verb == "selftest") {
      const fs::path scratch = flags.out.empty() ? fs::temp_directory_path() / "freewalk-selftest" : fs::path(flags.out);
      fs::create_directories(scratch);
      return run_selftest(std::cout, scratch);
    }
    const auto cfg = load(flags, verb);
    if (verb == "validate") {
      std::cout << cfg.normalized().dump(2) << "\nconfig hash " << cfg.hash() << '\n';
      return kOk;
    }
    RunOptions ro;
    ro.out = flags.out;
    ro.cache = flags.cache;
    ro.jobs = flags.jobs;
    const auto res = run_experiment(cfg, ro);
    for (const auto& s : res.manifest.stages) {
      std::cerr << s.name << ": " << s.status;
      if (!s.error.empty()) std::cerr << " (" << s.error << ")";
      std::cerr << '\n';
    }
    return res.exit_code;
  } catch (...) {
    std::string message;
    const int code = exit_code_for_current_exception(message);
    std::cerr << "error: " << message << '\n';
    return code;
  }
}
