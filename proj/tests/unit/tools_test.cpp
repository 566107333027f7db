#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "freewalk/errors.hpp"
#include "freewalk/tools/cache.hpp"
#include "freewalk/tools/config.hpp"
#include "freewalk/tools/report.hpp"

using namespace freewalk;
using namespace freewalk::tools;
namespace fs = std::filesystem;

namespace {

json base_config() {
  return json::parse(R"({
    "experiment": "green-table",
    "group": {"ranks": [1, 1]},
    "measure": {"weights": [0.5, 0.5]},
    "budgets": {"ball_radius": 2, "n_max": 16}
  })");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("freewalk_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string pointer_of(const json& doc, const ParseOptions& o = {}) {
  try {
    parse_config(doc, o);
  } catch (const ConfigSchemaError& e) {
    return e.issues().empty() ? "" : e.issues()[0].pointer;
  }
  return "<none>";
}

}  // namespace

TEST(Config, DefaultsFilled) {
  const auto cfg = parse_config(base_config());
  EXPECT_EQ(cfg.experiment, "green-table");
  EXPECT_EQ(cfg.ranks, (std::vector<int>{1, 1}));
  EXPECT_TRUE(cfg.params.contains("tolerance"));
  EXPECT_EQ(cfg.seed, 1u);
  EXPECT_EQ(cfg.budgets.ball_radius, 2);
}

TEST(Config, NegativeRadiusReportsPointer) {
  auto doc = base_config();
  doc["budgets"]["ball_radius"] = -1;
  EXPECT_EQ(pointer_of(doc), "/budgets/ball_radius");
}

TEST(Config, UnnormalizedWeightsWarnOrFail) {
  auto doc = base_config();
  doc["measure"]["weights"] = {1.0, 3.0};
  const auto cfg = parse_config(doc);
  EXPECT_NEAR(cfg.weights[0], 0.25, 1e-15);
  EXPECT_FALSE(cfg.warnings.empty());
  EXPECT_EQ(pointer_of(doc, {true, ""}), "/measure/weights");
}

TEST(Config, UnknownKeysStrict) {
  auto doc = base_config();
  doc["budgets"]["radius"] = 3;
  EXPECT_FALSE(parse_config(doc).warnings.empty());
  EXPECT_EQ(pointer_of(doc, {true, ""}), "/budgets/radius");
}

TEST(Config, BadElementAndExperiment) {
  auto doc = base_config();
  doc["params"]["elements"] = {"f3:(1)"};
  EXPECT_EQ(pointer_of(doc), "/params/elements/0");
  doc = base_config();
  doc["experiment"] = "nope";
  EXPECT_EQ(pointer_of(doc), "/experiment");
  EXPECT_THROW(parse_config(base_config(), {false, "ancona"}), ConfigError);
}

TEST(Config, HashIgnoresOutput) {
  auto a = base_config();
  auto b = base_config();
  b["output"] = "elsewhere";
  EXPECT_EQ(parse_config(a).hash(), parse_config(b).hash());
  b["seed"] = 9;
  EXPECT_NE(parse_config(a).hash(), parse_config(b).hash());
}

TEST(Sha, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cache, RoundTripAndCorruption) {
  const auto dir = scratch("cache");
  Cache c(dir);
  EXPECT_FALSE(c.get("kind", "k1"));
  c.put("kind", "k1", std::string("payload\0bytes", 13));
  auto v = c.get("kind", "k1");
  ASSERT_TRUE(v);
  EXPECT_EQ(*v, std::string("payload\0bytes", 13));
  {
    std::fstream f(c.entry_path("kind", "k1"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-3, std::ios::end);
    f.put('X');
  }
  EXPECT_FALSE(c.get("kind", "k1"));
  EXPECT_FALSE(fs::exists(c.entry_path("kind", "k1")));
  const auto s = c.stats();
  EXPECT_EQ(s.hits, 1);
  EXPECT_EQ(s.corrupt, 1);
  EXPECT_EQ(s.writes, 1);
}

TEST(Cache, DisabledIsNoOp) {
  Cache c;
  EXPECT_FALSE(c.enabled());
  c.put("kind", "k", "x");
  EXPECT_FALSE(c.get("kind", "k"));
}

TEST(Cache, PowersRoundTrip) {
  const auto spec = FreeProductSpec::lattice({2, 1});
  ConvolutionTable t(lift(AdaptedMeasure::simple(spec, {0.5, 0.5})));
  t.extend_to(5);
  ConvolutionTable u(t.base());
  EXPECT_EQ(decode_powers(encode_powers(t), u, spec), 5);
  for (const auto& g : enumerate_ball(spec, 3)) EXPECT_EQ(u.transition(g, 5), t.transition(g, 5));
  EXPECT_THROW(decode_powers("garbage", u, spec), Error);
}

TEST(Bytes, RoundTrip) {
  ByteWriter w;
  w.u64(42);
  w.i32(-7);
  w.f64(0.1);
  w.str("hi");
  ByteReader r(w.bytes());
  EXPECT_EQ(r.u64(), 42u);
  EXPECT_EQ(r.i32(), -7);
  EXPECT_EQ(r.f64(), 0.1);
  EXPECT_EQ(r.str(), "hi");
  EXPECT_TRUE(r.done());
  EXPECT_THROW(r.i32(), Error);
}

TEST(Report, CsvHeaderAndRowCheck) {
  ResultTable t("demo", "op", {{"x", "", "input"}, {"value", "1", "computed"}});
  t.add_row({1.0 / 3.0, std::string("a")});
  const auto csv = t.csv();
  EXPECT_NE(csv.find("# table: demo"), std::string::npos);
  EXPECT_NE(csv.find("0.33333333333333331"), std::string::npos);
  t.expect_rows(2);
  EXPECT_THROW(t.csv(), NumericalInconsistency);
  EXPECT_THROW(t.add_row({1.0}), Error);
}

TEST(Pipeline, SkipsDependentsOfFailures) {
  Pipeline p;
  int ran = 0;
  p.add("a", {}, [&] { ++ran; });
  p.add("b", {"a"}, [] { throw BudgetExceeded("too big"); });
  p.add("c", {"b"}, [&] { ++ran; });
  p.add("d", {"a"}, [&] { ++ran; });
  RunManifest m;
  EXPECT_EQ(p.run(m), kBudgetExceeded);
  EXPECT_EQ(ran, 2);
  ASSERT_EQ(m.stages.size(), 4u);
  EXPECT_EQ(m.stages[1].status, "failed");
  EXPECT_EQ(m.stages[2].status, "skipped");
  EXPECT_EQ(m.stages[3].status, "ok");
}

TEST(Atomic, WritesWholeFile) {
  const auto dir = scratch("atomic");
  write_atomically(dir / "f.txt", "content");
  EXPECT_EQ(slurp(dir / "f.txt"), "content");
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}), 1);
}

#ifdef FREEWALK_CLI
namespace {

int cli(const std::string& args) {
  const int rc = std::system((std::string(FREEWALK_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

fs::path write_config(const fs::path& dir, const json& doc) {
  const auto p = dir / "cfg.json";
  std::ofstream(p) << doc.dump();
  return p;
}

}  // namespace

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  EXPECT_EQ(cli("--bogus"), 2);
  EXPECT_EQ(cli("validate --config " + (dir / "missing.json").string()), 2);
  auto doc = base_config();
  doc["budgets"]["ball_radius"] = -2;
  EXPECT_EQ(cli("validate --config " + write_config(dir, doc).string()), 2);
  doc = base_config();
  doc["budgets"]["max_atoms"] = 10;
  EXPECT_EQ(cli("green-table --config " + write_config(dir, doc).string() + " --out " + (dir / "o").string()), 3);
  EXPECT_TRUE(fs::exists(dir / "o" / "manifest.json"));
  doc = base_config();
  EXPECT_EQ(cli("green-table --config " + write_config(dir, doc).string() + " --out " + (dir / "ok").string()), 0);
}

TEST(Cli, Deterministic) {
  const auto dir = scratch("det");
  auto doc = base_config();
  const auto cfg = write_config(dir, doc).string();
  ASSERT_EQ(cli("green-table --config " + cfg + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(cli("green-table --config " + cfg + " --out " + (dir / "b").string() + " --cache " +
                (dir / "cache").string()),
            0);
  EXPECT_EQ(slurp(dir / "a" / "green_table.csv"), slurp(dir / "b" / "green_table.csv"));
  EXPECT_FALSE(slurp(dir / "a" / "green_table.csv").empty());
}
#endif
