#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "wcontract/output.hpp"
#include "wcontract/run.hpp"

using namespace wcontract;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("wcontract_test_" + name);
  fs::remove_all(d);
  return d;
}

ExperimentConfig config(const std::string& body, const fs::path& dir) {
  return parse_config(body, {{"output.dir", dir.string()}});
}

const char* kEig = R"(
[model]
kind = overdamped1d
potential = U0
theta = 1
[operation]
name = fk-eig
p = 2
[numeric]
seed = 1
dx = 0.01
)";

const char* kKappa = R"(
[model]
kind = overdamped1d
potential = U1
theta = 1
[operation]
name = kappa
ps = 1, 2
times = 0.5
grid_lo = -1
grid_hi = 1
grid_step = 0.5
[numeric]
seed = 3
N = 300
dt = 0.001
)";

}  // namespace

TEST(Json, WriterLayoutAndNumbers) {
  JsonWriter w;
  w.begin_object().value("a", 0.1).value("n", 3L).value("ok", true).value("s", "q\"x\n");
  w.array("v", {1, 2.5}).value("bad", std::numeric_limits<double>::infinity()).end_object();
  auto j = nlohmann::json::parse(w.str());
  EXPECT_EQ(j["a"].get<double>(), 0.1);
  EXPECT_EQ(j["n"].get<long>(), 3);
  EXPECT_TRUE(j["ok"].get<bool>());
  EXPECT_EQ(j["s"].get<std::string>(), "q\"x\n");
  EXPECT_EQ(j["v"][1].get<double>(), 2.5);
  EXPECT_TRUE(j["bad"].is_null());
  EXPECT_NE(w.str().find("0.10000000000000001"), std::string::npos);
}

TEST(Csv, HeaderAndRows) {
  CsvTable t({"p", "theta2", "J_over_p"});
  t.add_row({"1", "0.5", "-2"});
  EXPECT_EQ(t.rows(), 1u);
  EXPECT_EQ(t.str(), "p,theta2,J_over_p\n1,0.5,-2\n");
}

TEST(Heatmap, SingleCellAndClamping) {
  SweepResult s;
  s.ps = {1};
  s.theta2s = {0.5};
  s.values = {-2};
  s.converged = {1};
  std::string svg = render_heatmap(s);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("-2"), std::string::npos);
  EXPECT_EQ(diverging_color(-100, -4, 4), diverging_color(-4, -4, 4));
  EXPECT_EQ(diverging_color(100, -4, 4), diverging_color(4, -4, 4));
  EXPECT_EQ(diverging_color(0, -4, 4), "#ffffff");
  EXPECT_NE(diverging_color(-1, -4, 4), diverging_color(1, -4, 4));
}

TEST(Heatmap, OneRectPerCell) {
  SweepResult s;
  s.ps = {1, 2, 3};
  s.theta2s = {0.1, 1};
  s.values = {-1, -2, 0.5, 1, 2, 3};
  s.converged.assign(6, 1);
  std::string svg = render_heatmap(s);
  std::size_t n = 0;
  for (std::size_t pos = 0; (pos = svg.find("<title>p=", pos)) != std::string::npos; ++pos) ++n;
  EXPECT_EQ(n, 6u);
}

TEST(Run, EigenvalueArtifacts) {
  auto dir = scratch("eig");
  auto r = run(config(kEig, dir), 1);
  ASSERT_EQ(r.exit_code, exit_ok) << r.error;
  EXPECT_TRUE(fs::exists(dir / "fk_eig.csv"));
  EXPECT_TRUE(fs::exists(dir / "fk_eigenvector.csv"));
  auto j = nlohmann::json::parse(slurp(dir / "fk_eig.json"));
  EXPECT_NEAR(j["J_over_p"].get<double>(), -2, 1e-8);
  auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["operation"], "fk-eig");
  EXPECT_EQ(m["seed"], "1");  // strings keep all 64 bits
  EXPECT_EQ(m["exit_code"].get<int>(), 0);
  EXPECT_EQ(r.files.back(), (dir / "manifest.json").string());
  // the stored config reproduces the run
  auto again = parse_config(m["config_text"].get<std::string>());
  EXPECT_TRUE(again == config(kEig, dir));
}

TEST(Run, KappaCsvSchema) {
  auto dir = scratch("kappa");
  auto r = run(config(kKappa, dir), 1);
  ASSERT_EQ(r.exit_code, exit_ok) << r.error;
  std::string csv = slurp(dir / "kappa.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "t,p,estimate,stderr,n,excluded,argmax_x,argmax_v,grid_edge");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Run, ArtifactsIndependentOfThreads) {
  auto d1 = scratch("thr1"), d4 = scratch("thr4");
  ASSERT_EQ(run(config(kKappa, d1), 1).exit_code, exit_ok);
  ASSERT_EQ(run(config(kKappa, d4), 4).exit_code, exit_ok);
  EXPECT_EQ(slurp(d1 / "kappa.csv"), slurp(d4 / "kappa.csv"));
  EXPECT_EQ(slurp(d1 / "kappa.json"), slurp(d4 / "kappa.json"));
}

TEST(Run, ExitCodes) {
  auto dir = scratch("codes");
  // invalid model parameters are configuration errors
  std::string bad = std::string(kEig).replace(std::string(kEig).find("theta = 1"), 9, "theta = -1");
  auto r = run(config(bad, dir), 1);
  EXPECT_EQ(r.exit_code, exit_config);
  EXPECT_FALSE(r.error.empty());
  auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["exit_code"].get<int>(), exit_config);

  std::ostringstream err;
  auto c = run_command("fk-eig", (dir / "missing.ini").string(), dir.string(), 1, 1, err);
  EXPECT_EQ(c.exit_code, exit_config);
  EXPECT_FALSE(err.str().empty());
}

TEST(Run, SubcommandMustMatchConfig) {
  auto dir = scratch("sub");
  fs::create_directories(dir);
  write_text_file((dir / "c.ini").string(), kEig);
  std::ostringstream err;
  EXPECT_EQ(run_command("kappa", (dir / "c.ini").string(), dir.string(), std::nullopt, 1, err).exit_code,
            exit_config);
  auto ok = run_command("fk-eig", (dir / "c.ini").string(), (dir / "o").string(), 5ull, 1, err);
  EXPECT_EQ(ok.exit_code, exit_ok) << err.str();
  auto m = nlohmann::json::parse(slurp(dir / "o" / "manifest.json"));
  EXPECT_EQ(m["seed"], "5");
}

TEST(Run, ManifestIsByteIdenticalOnRerun) {
  auto dir = scratch("rerun");
  ASSERT_EQ(run(config(kKappa, dir), 1).exit_code, exit_ok);
  std::string first = slurp(dir / "manifest.json");
  auto r = run(config(kKappa, dir), 4);
  ASSERT_EQ(r.exit_code, exit_ok);
  EXPECT_EQ(slurp(dir / "manifest.json"), first);
  EXPECT_GT(r.wall_time_s, 0);
}
