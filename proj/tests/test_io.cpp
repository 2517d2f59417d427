#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "coregauge/io.hpp"
#include "test_util.hpp"

using namespace coregauge;
using json = nlohmann::json;

namespace {

std::filesystem::path source_dir() { return COREGAUGE_SOURCE_DIR; }

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("coregauge_io_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(MarketJson, ConfigRoundTrip) {
  auto c = testkit::small_random_config(17);
  c.distribution = Distribution::truncated_beta(2.0, 5.0);
  const auto back = io::market_config_from_json(io::to_json(c));
  EXPECT_EQ(back.worker_counts, c.worker_counts);
  EXPECT_EQ(back.employer_counts, c.employer_counts);
  EXPECT_EQ(back.u.data(), c.u.data());
  EXPECT_EQ(back.distribution.kind, c.distribution.kind);
  EXPECT_EQ(back.distribution.a, 2.0);
  EXPECT_EQ(back.seed, c.seed);
}

TEST(MarketJson, RealizationRoundTripIsExact) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto r = sample_market(testkit::small_random_config(s));
    const auto text = io::to_json(r).dump();
    const auto back = io::market_from_json(json::parse(text));
    EXPECT_EQ(back.epsilon.data(), r.epsilon.data());
    EXPECT_EQ(back.eta.data(), r.eta.data());
    EXPECT_EQ(back.worker_type, r.worker_type);
    EXPECT_EQ(back.employer_type, r.employer_type);
  }
}

TEST(MarketJson, RejectsUnknownKeys) {
  auto j = io::to_json(testkit::small_random_config(1));
  j["sede"] = 3;
  EXPECT_THROW(io::market_config_from_json(j), ConfigError);
}

TEST(MarketJson, RejectsOutOfRangeNoise) {
  auto j = io::to_json(sample_market(testkit::small_random_config(2)));
  j["epsilon"][0][0] = 1.5;
  EXPECT_THROW(io::market_from_json(j), ConfigError);
}

TEST(MarketJson, RejectsMalformedUtility) {
  auto j = io::to_json(testkit::small_random_config(3));
  j["u"] = json::array({json::array({1.0})});
  if (j["K"].get<int>() == 1 && j["Q"].get<int>() == 1) j["K"] = 2;
  EXPECT_THROW(io::market_config_from_json(j), ConfigError);
}

TEST(SolutionJson, RoundTripPreservesMatchingAndWitnesses) {
  const auto r = sample_market(testkit::small_random_config(5, 8));
  const auto m = max_weight_matching(r);
  const auto b = core_bounds(build_constraint_graph(r, m));
  const auto s = io::solution_from_json(json::parse(io::solution_to_json(m, b).dump()), r);
  EXPECT_EQ(s.matching.pairs, m.pairs);
  EXPECT_EQ(s.witness_min, b.witness_min);
  EXPECT_EQ(s.witness_max, b.witness_max);
  EXPECT_FALSE(s.has_alpha);
}

TEST(SolutionJson, TamperedWeightIsRejected) {
  const auto r = testkit::handmade(1, 1, {1}, {1}, {2.0}, {0.3}, {0.4});
  const auto m = max_weight_matching(r);
  auto j = io::solution_to_json(m, core_bounds(build_constraint_graph(r, m)));
  j["matching"]["weight"] = 9.0;
  EXPECT_ANY_THROW(io::solution_from_json(j, r));
}

TEST(Files, MissingFileNamesThePath) {
  try {
    io::read_json_file("/nonexistent/dir/market.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/market.json"), std::string::npos);
  }
}

TEST(Files, InvalidJsonIsConfigError) {
  const auto dir = temp_dir("bad");
  io::write_text_file(dir / "bad.json", "{ not json");
  EXPECT_THROW(io::read_json_file(dir / "bad.json"), ConfigError);
}

TEST(Configs, ShippedConfigsParse) {
  const auto root = source_dir() / "configs";
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.path().extension() != ".json") continue;
    const auto j = io::read_json_file(entry.path());
    const auto name = entry.path().filename().string();
    SCOPED_TRACE(entry.path().string());
    if (j.contains("epsilon")) {
      EXPECT_NO_THROW(io::market_from_json(j));
    } else if (!j.contains("experiment")) {
      EXPECT_NO_THROW(io::market_config_from_json(j));
    } else {
      const auto kind = j["experiment"].get<std::string>();
      if (kind == "scaling") EXPECT_NO_THROW(io::scaling_params_from_json(j));
      else if (kind == "lowerbound") EXPECT_NO_THROW(io::lower_bound_params_from_json(j));
      else if (kind == "theorem2") EXPECT_NO_THROW(io::theorem2_params_from_json(j));
      else if (kind == "lemmas") EXPECT_NO_THROW(io::lemma_params_from_json(j));
      else ADD_FAILURE() << "unknown experiment " << kind;
    }
  }
}

TEST(Configs, ExperimentParsersRejectUnknownKeys) {
  EXPECT_THROW(io::lower_bound_params_from_json(json{{"K", 2}, {"n_tilde_grid", {10}}, {"trails", 5}}),
               ConfigError);
  EXPECT_THROW(io::imbalance_from_json(json{{"rule", "sideways"}}), ConfigError);
  EXPECT_THROW(io::delta_rule_from_json(json{{"kind", "fixed"}}), ConfigError);
}

TEST(Configs, ImbalancedConfigValues) {
  const auto p = io::theorem2_params_from_json(
      io::read_json_file(source_dir() / "configs/experiments/theorem2_fixed.json"));
  EXPECT_EQ(p.imbalance.kind, experiments::ImbalanceRule::Kind::kFixed);
  EXPECT_EQ(p.imbalance.m, 1);
  EXPECT_EQ(p.n_grid.front(), 200);
}

TEST(Reports, CsvShapesAndSummaryFields) {
  experiments::LowerBoundParams p;
  p.n_tilde_grid = {8, 16};
  p.trials = 3;
  const auto rep = experiments::lower_bound_experiment(p);
  const auto trials = io::trials_csv(rep);
  std::istringstream in(trials);
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("grid_index,trial,n,seed,attempts,C,empty_matching,unmarked_components", 0), 0u);
  EXPECT_NE(header.find("event_B"), std::string::npos);
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), std::count(header.begin(), header.end(), ','));
    ++rows;
  }
  EXPECT_EQ(rows, 6);

  const auto summary = io::summary_json(rep);
  EXPECT_TRUE(summary["fit"].contains("slope"));
  EXPECT_EQ(summary["rows"].size(), 2u);
  EXPECT_EQ(summary["experiment"], "lowerbound");

  const auto dir = temp_dir("report");
  io::write_report(rep, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "trials.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "aggregate.csv"));
  EXPECT_EQ(io::read_json_file(dir / "summary.json")["seed"], rep.seed);
}

TEST(Reports, NaNBecomesNull) {
  experiments::ExperimentReport rep;
  rep.id = "x";
  EXPECT_TRUE(io::summary_json(rep)["fit"]["slope"].is_null());
}
