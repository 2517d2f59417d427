#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coregauge/corepoly.hpp"
#include "coregauge/error.hpp"
#include "coregauge/experiments.hpp"
#include "coregauge/io.hpp"
#include "coregauge/market.hpp"
#include "coregauge/matching.hpp"
#include "coregauge/oracle.hpp"

namespace coregauge::cli {

enum ExitCode : int {
  kOk = 0,
  kUnstable = 1,
  kValidation = 2,
  kCapability = 3,
  kInconsistency = 4,
};

inline constexpr const char* kSeedEnv = "CORE_GAUGE_SEED";

inline std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv(kSeedEnv);
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto s = std::stoull(v, &used, 0);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw ConfigError(std::string(kSeedEnv) + " is not an unsigned integer");
  }
}

namespace detail {

inline int cmd_gen(const std::string& config_path, std::optional<std::uint64_t> seed,
                   const std::string& out_path, std::ostream& out) {
  auto cfg = io::market_config_from_json(io::read_json_file(config_path));
  if (seed)
    cfg.seed = *seed;
  else if (auto env = seed_from_env())
    cfg.seed = *env;
  const auto r = sample_market(cfg);
  io::write_json_file(out_path, io::to_json(r));
  out << "wrote market with " << r.n_workers() << " workers and " << r.n_employers()
      << " employers to " << out_path << "\n";
  return kOk;
}

inline int cmd_solve(const std::string& market_path, const std::string& out_path,
                     std::ostream& out, std::ostream& err) {
  const auto r = io::market_from_json(io::read_json_file(market_path));
  const auto deg = degeneracy_scan(r);
  if (deg.flagged())
    err << "warning: market has " << deg.tie_count << " value ties and " << deg.near_zero_count
        << " zero values; the core is still computed for the canonical matching\n";
  const auto m = max_weight_matching(r);
  const auto b = core_bounds(build_constraint_graph(r, m));
  const auto c = core_size(b, m);
  if (c.empty_matching) err << "warning: empty matching, core size defined as 0\n";
  io::write_json_file(out_path, io::solution_to_json(m, b));
  out << "matched " << m.pairs.size() << " pairs, weight " << m.weight << ", core size " << c.value
      << "\n";
  return kOk;
}

inline int cmd_verify(const std::string& market_path, const std::string& solution_path,
                      bool check_optimality, std::ostream& out) {
  const auto r = io::market_from_json(io::read_json_file(market_path));
  const auto s = io::solution_from_json(io::read_json_file(solution_path), r);
  std::vector<std::pair<std::string, std::vector<double>>> candidates;
  if (s.has_alpha) {
    candidates.emplace_back("alpha", s.alpha);
  } else {
    candidates.emplace_back("witness_min", s.witness_min);
    candidates.emplace_back("witness_max", s.witness_max);
  }
  bool stable = true;
  for (const auto& [name, values] : candidates) {
    const auto rep = oracle::verify_stability(r, s.matching, oracle::price_map(s.nodes, values));
    out << name << ": " << (rep.stable ? "stable" : "UNSTABLE");
    if (!rep.stable) out << " (" << rep.violation_count << " violations)";
    out << "\n";
    for (const auto& v : rep.violations) out << "  " << v << "\n";
    stable = stable && rep.stable;
  }
  if (check_optimality) {
    const auto best = oracle::brute_force_matching(r);
    const bool optimal = std::abs(best.weight - s.matching.weight) <= 1e-9;
    out << "optimality: " << (optimal ? "weight matches exhaustive search" : "NOT maximum") << "\n";
    stable = stable && optimal;
  }
  return stable ? kOk : kUnstable;
}

inline int cmd_experiment(const std::string& kind, const std::string& config_path,
                          const std::string& out_dir, int workers, std::ostream& out) {
  const auto j = io::read_json_file(config_path);
  if (j.contains("experiment") && j["experiment"] != kind)
    throw ConfigError("config is for experiment '" + j["experiment"].get<std::string>() +
                      "', not '" + kind + "'");
  experiments::ExperimentReport rep;
  if (kind == "scaling")
    rep = experiments::scaling_experiment(io::scaling_params_from_json(j), workers);
  else if (kind == "lowerbound")
    rep = experiments::lower_bound_experiment(io::lower_bound_params_from_json(j), workers);
  else if (kind == "theorem2")
    rep = experiments::theorem2_experiment(io::theorem2_params_from_json(j), workers);
  else if (kind == "lemmas")
    rep = experiments::lemma_audit_experiment(io::lemma_params_from_json(j), workers);
  else
    throw ConfigError("unknown experiment '" + kind + "'");
  rep.parameters["config"] = config_path;
  io::write_report(rep, out_dir);
  out << kind << ": " << rep.rows.size() << " rows, " << rep.trials.size() << " trials";
  if (rep.fit.points >= 2) out << ", slope " << rep.fit.slope;
  out << ", " << rep.wall_clock_seconds << " s -> " << out_dir << "\n";
  return kOk;
}

inline int cmd_assumptions(const std::string& config_path, std::optional<double> growth,
                           std::ostream& out) {
  const auto cfg = io::market_config_from_json(io::read_json_file(config_path));
  const auto balanced = check_assumption_no_balanced_submarket(cfg);
  io::json report;
  report["no_balanced_submarket"] = balanced.holds;
  if (!balanced.holds)
    report["balanced_witness"] = {{"worker_types", balanced.worker_types},
                                  {"employer_types", balanced.employer_types}};
  int smallest = cfg.worker_counts[0];
  for (int v : cfg.worker_counts) smallest = std::min(smallest, v);
  for (int v : cfg.employer_counts) smallest = std::min(smallest, v);
  report["smallest_type_share"] = static_cast<double>(smallest) / cfg.n_agents();
  if (growth) {
    report["linear_growth_constant"] = *growth;
    report["linear_growth"] = check_assumption_linear_growth(cfg, *growth);
  }
  out << report.dump(2) << "\n";
  return kOk;
}

}  // namespace detail

// Parses argv and runs one subcommand. Errors are reported on `err` and
// mapped to the exit-code contract; nothing is thrown.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Core size in assignment markets with agent types"};
  app.require_subcommand(1);

  std::string config, out_path, market, solution, out_dir, kind;
  std::uint64_t seed = 0;
  int workers = 1;
  bool check_optimality = false;
  double growth = 0.0;

  auto* gen = app.add_subcommand("gen", "Sample a market from a config");
  gen->add_option("--config", config, "Market config JSON")->required();
  auto* seed_opt = gen->add_option("--seed", seed, "Seed (overrides config and CORE_GAUGE_SEED)");
  gen->add_option("--out", out_path, "Output market JSON")->required();

  auto* solve = app.add_subcommand("solve", "Matching, core bounds and core size");
  solve->add_option("--market", market, "Market JSON")->required();
  solve->add_option("--out", out_path, "Output solution JSON")->required();

  auto* verify = app.add_subcommand("verify", "Check a solution's prices for stability");
  verify->add_option("--market", market, "Market JSON")->required();
  verify->add_option("--solution", solution, "Solution JSON")->required();
  verify->add_flag("--check-optimality", check_optimality,
                   "Also compare the matching weight with exhaustive search (small markets)");

  auto* experiment = app.add_subcommand("experiment", "Run a Monte Carlo experiment");
  experiment->add_option("kind", kind, "scaling | lowerbound | theorem2 | lemmas")
      ->required()
      ->check(CLI::IsMember({"scaling", "lowerbound", "theorem2", "lemmas"}));
  experiment->add_option("--config", config, "Experiment config JSON")->required();
  experiment->add_option("--out-dir", out_dir, "Directory for CSV and JSON reports")->required();
  experiment->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  auto* assumptions = app.add_subcommand("assumptions", "Report the structural assumptions");
  assumptions->add_option("--config", config, "Market config JSON")->required();
  auto* growth_opt =
      assumptions->add_option("--growth-constant", growth, "Check n_t >= C n for this C");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);  // prints help or the parse error
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*gen)
      return detail::cmd_gen(config, seed_opt->count() ? std::optional(seed) : std::nullopt,
                             out_path, out);
    if (*solve) return detail::cmd_solve(market, out_path, out, err);
    if (*verify) return detail::cmd_verify(market, solution, check_optimality, out);
    if (*experiment) return detail::cmd_experiment(kind, config, out_dir, workers, out);
    if (*assumptions)
      return detail::cmd_assumptions(
          config, growth_opt->count() ? std::optional(growth) : std::nullopt, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const CapabilityError& e) {
    err << "error: " << e.what() << "\n";
    return kCapability;
  } catch (const InconsistencyError& e) {
    err << "internal inconsistency: " << e.what() << "\n";
    return kInconsistency;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInconsistency;
  }
  return kValidation;
}

}  // namespace coregauge::cli
