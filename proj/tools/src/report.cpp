#include "freewalk/tools/report.hpp"

#include <fmt/format.h>
#include <fstream>
#include <set>
#include <unistd.h>

#include "freewalk/errors.hpp"
#include "freewalk/tools/config.hpp"

namespace freewalk::tools {

namespace fs = std::filesystem;

std::string format_cell(const Cell& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>)
          return fmt::format("{:.17g}", v);
        else if constexpr (std::is_same_v<T, bool>)
          return v ? "true" : "false";
        else if constexpr (std::is_same_v<T, std::string>)
          return v.find_first_of(",\"\n") == std::string::npos ? v : "\"" + v + "\"";
        else
          return fmt::format("{}", v);
      },
      c);
}

ResultTable::ResultTable(std::string name, std::string operation, std::vector<Column> columns)
    : name_(std::move(name)), operation_(std::move(operation)), columns_(std::move(columns)) {}

void ResultTable::add_row(std::vector<Cell> row) {
  if (row.size() != columns_.size())
    throw Error(fmt::format("table {}: row has {} cells, expected {}", name_, row.size(), columns_.size()));
  std::vector<std::string> cells;
  for (const auto& c : row) cells.push_back(format_cell(c));
  rows_.push_back(std::move(cells));
}

std::string ResultTable::csv() const {
  if (expected_ && *expected_ != rows_.size())
    throw NumericalInconsistency(
        fmt::format("table {}: {} rows written but the grid asks for {}", name_, rows_.size(), *expected_));
  std::string s = fmt::format("# table: {}\n# operation: {}\n", name_, operation_);
  for (const auto& c : columns_) s += fmt::format("# column {} [{}]: {}\n", c.name, c.unit, c.provenance);
  for (std::size_t i = 0; i < columns_.size(); ++i) s += (i ? "," : "") + columns_[i].name;
  s += '\n';
  for (const auto& r : rows_) {
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
    s += '\n';
  }
  return s;
}

json RunManifest::to_json() const {
  json st = json::array();
  for (const auto& s : stages) {
    json j = {{"name", s.name}, {"depends_on", s.depends_on}, {"status", s.status}, {"seconds", s.seconds}};
    if (!s.error.empty()) j["error"] = s.error;
    st.push_back(j);
  }
  json art = json::array();
  for (const auto& a : artifacts) art.push_back({{"path", a.path}, {"sha256", a.sha256}, {"complete", a.complete}});
  return {{"config_hash", config_hash},
          {"version", version},
          {"experiment", experiment},
          {"seed", seed},
          {"status", status},
          {"stages", st},
          {"artifacts", art},
          {"cache",
           {{"enabled", cache_enabled},
            {"hits", cache.hits},
            {"misses", cache.misses},
            {"corrupt", cache.corrupt},
            {"writes", cache.writes}}},
          {"tolerances", tolerances},
          {"warnings", warnings}};
}

void write_atomically(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + fmt::format(".{}.tmp", static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      throw Error(fmt::format("cannot write '{}'", path.string()));
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(fmt::format("cannot install '{}': {}", path.string(), ec.message()));
}

void Pipeline::add(std::string name, std::vector<std::string> depends_on, Fn fn) {
  for (const auto& d : depends_on) {
    bool found = false;
    for (const auto& s : stages_) found = found || s.name == d;
    if (!found) throw Error(fmt::format("stage '{}' depends on unknown or later stage '{}'", name, d));
  }
  stages_.push_back({std::move(name), std::move(depends_on), std::move(fn)});
}

int Pipeline::run(RunManifest& manifest) {
  std::set<std::string> succeeded;
  int first = kOk;
  for (auto& stage : stages_) {
    StageRecord rec;
    rec.name = stage.name;
    rec.depends_on = stage.deps;
    bool ready = true;
    for (const auto& d : stage.deps) ready = ready && succeeded.contains(d);
    if (!ready) {
      rec.status = "skipped";
      rec.error = "a dependency did not complete";
      manifest.stages.push_back(rec);
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      stage.fn();
      rec.status = "ok";
      succeeded.insert(stage.name);
    } catch (...) {
      rec.status = "failed";
      rec.exit_code = exit_code_for_current_exception(rec.error);
      if (first == kOk) first = rec.exit_code;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.stages.push_back(rec);
  }
  if (first != kOk) manifest.status = "failed";
  return first;
}

int exit_code_for_current_exception(std::string& message) {
  try {
    throw;
  } catch (const ConfigError& e) {
    message = e.what();
    return kConfigError;
  } catch (const DomainError& e) {
    message = e.what();
    return kConfigError;
  } catch (const BudgetExceeded& e) {
    message = e.what();
    return kBudgetExceeded;
  } catch (const NumericalInconsistency& e) {
    message = e.what();
    return kInconsistent;
  } catch (const std::exception& e) {
    message = e.what();
    return kFailure;
  } catch (...) {
    message = "unknown error";
    return kFailure;
  }
}

}  // namespace freewalk::tools
