#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "coregauge/cli.hpp"

using namespace coregauge;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "core_gauge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path configs() { return fs::path(COREGAUGE_SOURCE_DIR) / "configs"; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("coregauge_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    unsetenv(cli::kSeedEnv);
  }
  void TearDown() override { unsetenv(cli::kSeedEnv); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SinglePairSolveAndVerify) {
  const auto market = (configs() / "markets/single_pair_market.json").string();
  ASSERT_EQ(run({"solve", "--market", market, "--out", path("sol.json")}).code, cli::kOk);
  const auto sol = io::read_json_file(path("sol.json"));
  EXPECT_NEAR(sol["core"]["nodes"][0]["alpha_min"].get<double>(), -0.3, 1e-12);
  EXPECT_NEAR(sol["core"]["nodes"][0]["alpha_max"].get<double>(), 2.4, 1e-12);
  EXPECT_NEAR(sol["core_size"].get<double>(), 2.7, 1e-12);
  EXPECT_EQ(run({"verify", "--market", market, "--solution", path("sol.json")}).code, cli::kOk);
  EXPECT_EQ(run({"verify", "--market", market, "--solution", path("sol.json"), "--check-optimality"}).code,
            cli::kOk);

  auto bad = sol;
  bad["alpha"] = {{{"k", 0}, {"q", 0}, {"value", 2.5}}};
  io::write_json_file(path("bad.json"), bad);
  const auto r = run({"verify", "--market", market, "--solution", path("bad.json")});
  EXPECT_EQ(r.code, cli::kUnstable);
  EXPECT_NE(r.out.find("UNSTABLE"), std::string::npos);
}

TEST_F(CliTest, RoundTripOnEveryMarketTemplate) {
  for (const auto& entry : fs::directory_iterator(configs() / "markets")) {
    if (io::read_json_file(entry.path()).contains("epsilon")) continue;  // a stored realization
    SCOPED_TRACE(entry.path().string());
    for (int seed = 0; seed < 100; ++seed) {
      const auto s = std::to_string(seed);
      ASSERT_EQ(run({"gen", "--config", entry.path().string(), "--seed", s, "--out", path("m.json")}).code,
                cli::kOk);
      ASSERT_EQ(run({"solve", "--market", path("m.json"), "--out", path("s.json")}).code, cli::kOk);
      const auto v = run({"verify", "--market", path("m.json"), "--solution", path("s.json")});
      ASSERT_EQ(v.code, cli::kOk) << "seed " << seed << "\n" << v.out;
    }
  }
}

TEST_F(CliTest, OptimalityCheckTooLargeIsCapabilityError) {
  const auto cfg = (configs() / "markets/k2q2.json").string();
  ASSERT_EQ(run({"gen", "--config", cfg, "--seed", "1", "--out", path("m.json")}).code, cli::kOk);
  ASSERT_EQ(run({"solve", "--market", path("m.json"), "--out", path("s.json")}).code, cli::kOk);
  EXPECT_EQ(run({"verify", "--market", path("m.json"), "--solution", path("s.json"), "--check-optimality"})
                .code,
            cli::kCapability);
}

TEST_F(CliTest, MissingFileIsValidationError) {
  const auto r = run({"solve", "--market", path("absent.json"), "--out", path("s.json")});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_NE(r.err.find("absent.json"), std::string::npos);
}

TEST_F(CliTest, BadArgumentsAreValidationErrors) {
  EXPECT_EQ(run({}).code, cli::kValidation);
  EXPECT_EQ(run({"solve"}).code, cli::kValidation);
  EXPECT_EQ(run({"experiment", "bogus", "--config", "x", "--out-dir", "y"}).code, cli::kValidation);
  EXPECT_EQ(run({"--help"}).code, cli::kOk);
}

TEST_F(CliTest, SeedPrecedence) {
  const auto cfg = (configs() / "markets/one_type_unbalanced.json").string();
  setenv(cli::kSeedEnv, "77", 1);
  ASSERT_EQ(run({"gen", "--config", cfg, "--out", path("env.json")}).code, cli::kOk);
  EXPECT_EQ(io::read_json_file(path("env.json"))["config"]["seed"], 77);
  ASSERT_EQ(run({"gen", "--config", cfg, "--seed", "5", "--out", path("flag.json")}).code, cli::kOk);
  EXPECT_EQ(io::read_json_file(path("flag.json"))["config"]["seed"], 5);
  unsetenv(cli::kSeedEnv);
  ASSERT_EQ(run({"gen", "--config", cfg, "--out", path("cfg.json")}).code, cli::kOk);
  EXPECT_EQ(io::read_json_file(path("cfg.json"))["config"]["seed"], 1);
  setenv(cli::kSeedEnv, "nope", 1);
  EXPECT_EQ(run({"gen", "--config", cfg, "--out", path("x.json")}).code, cli::kValidation);
}

TEST_F(CliTest, GenIsDeterministic) {
  const auto cfg = (configs() / "markets/k2q2.json").string();
  ASSERT_EQ(run({"gen", "--config", cfg, "--seed", "9", "--out", path("a.json")}).code, cli::kOk);
  ASSERT_EQ(run({"gen", "--config", cfg, "--seed", "9", "--out", path("b.json")}).code, cli::kOk);
  EXPECT_EQ(io::read_json_file(path("a.json")), io::read_json_file(path("b.json")));
}

TEST_F(CliTest, LowerBoundExperimentWritesReports) {
  const auto r = run({"experiment", "lowerbound", "--config",
                      (configs() / "experiments/smoke/lowerbound_k2.json").string(), "--out-dir",
                      path("lb"), "--workers", "2"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "lb/trials.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "lb/aggregate.csv"));
  const auto summary = io::read_json_file(dir_ / "lb/summary.json");
  ASSERT_TRUE(summary["fit"].contains("slope"));
  EXPECT_TRUE(summary["fit"]["slope"].is_number());
}

TEST_F(CliTest, EverySmokeExperimentRuns) {
  for (const auto& kind : {"scaling", "theorem2_proportional", "theorem2_fixed", "lemmas"}) {
    const auto cfg = configs() / "experiments/smoke" / (std::string(kind) + ".json");
    const auto id = io::read_json_file(cfg)["experiment"].get<std::string>();
    const auto r = run({"experiment", id, "--config", cfg.string(), "--out-dir", path(kind)});
    EXPECT_EQ(r.code, cli::kOk) << kind << ": " << r.err;
  }
}

TEST_F(CliTest, ExperimentKindMustMatchConfig) {
  const auto r = run({"experiment", "scaling", "--config",
                      (configs() / "experiments/smoke/lowerbound_k2.json").string(), "--out-dir", path("x")});
  EXPECT_EQ(r.code, cli::kValidation);
}

TEST_F(CliTest, AssumptionsReport) {
  auto r = run({"assumptions", "--config", (configs() / "markets/one_type_balanced.json").string()});
  ASSERT_EQ(r.code, cli::kOk);
  auto j = io::json::parse(r.out);
  EXPECT_FALSE(j["no_balanced_submarket"].get<bool>());
  r = run({"assumptions", "--config", (configs() / "markets/k2q2.json").string(), "--growth-constant", "0.2"});
  ASSERT_EQ(r.code, cli::kOk);
  j = io::json::parse(r.out);
  EXPECT_TRUE(j["no_balanced_submarket"].get<bool>());
  EXPECT_TRUE(j["linear_growth"].get<bool>());
}

TEST_F(CliTest, BinaryRunsOutOfProcess) {
  const std::string cmd = std::string(COREGAUGE_CLI) + " solve --market " +
                          (configs() / "markets/single_pair_market.json").string() + " --out " +
                          path("sol.json") + " > /dev/null";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "sol.json"));
}
