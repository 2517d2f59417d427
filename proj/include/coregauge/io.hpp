#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coregauge/corepoly.hpp"
#include "coregauge/error.hpp"
#include "coregauge/experiments.hpp"
#include "coregauge/market.hpp"
#include "coregauge/matching.hpp"

namespace coregauge::io {

using json = nlohmann::json;

namespace detail {

// Rejects keys outside `allowed` so a misspelt option never silently
// falls back to a default.
inline void expect_keys(const json& j, std::initializer_list<const char*> allowed,
                        const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline json matrix_to_json(const Matrix<double>& m) {
  json out = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    out.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return out;
}

inline Matrix<double> matrix_from_json(const json& j, std::size_t rows, std::size_t cols,
                                       const std::string& where) {
  if (!j.is_array() || j.size() != rows) throw ConfigError(where + ": wrong number of rows");
  Matrix<double> m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(where + ": wrong row length");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ConfigError(where + ": entries must be numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

inline json to_json(const Distribution& d) {
  if (d.kind == DistributionKind::kUniform01) return {{"kind", "uniform01"}};
  return {{"kind", "truncated_beta"}, {"a", d.a}, {"b", d.b}};
}

inline Distribution distribution_from_json(const json& j) {
  const std::string where = "distribution";
  detail::expect_keys(j, {"kind", "a", "b"}, where);
  const auto kind = detail::get<std::string>(j, "kind", where);
  if (kind == "uniform01") return Distribution::uniform01();
  if (kind == "truncated_beta")
    return Distribution::truncated_beta(detail::get<double>(j, "a", where),
                                        detail::get<double>(j, "b", where));
  throw ConfigError("distribution: unknown kind '" + kind + "'");
}

inline json to_json(const MarketConfig& c) {
  return {{"K", c.K},
          {"Q", c.Q},
          {"worker_counts", c.worker_counts},
          {"employer_counts", c.employer_counts},
          {"u", matrix_to_json(c.u)},
          {"distribution", to_json(c.distribution)},
          {"seed", c.seed}};
}

inline MarketConfig market_config_from_json(const json& j) {
  const std::string where = "market config";
  detail::expect_keys(j, {"K", "Q", "worker_counts", "employer_counts", "u", "distribution", "seed"},
                      where);
  MarketConfig c;
  c.K = detail::get<int>(j, "K", where);
  c.Q = detail::get<int>(j, "Q", where);
  if (c.K < 1 || c.Q < 1) throw ConfigError("K and Q must be at least 1");
  c.worker_counts = detail::get<std::vector<int>>(j, "worker_counts", where);
  c.employer_counts = detail::get<std::vector<int>>(j, "employer_counts", where);
  c.u = matrix_from_json(j.at("u"), c.K, c.Q, "u");
  if (j.contains("distribution")) c.distribution = distribution_from_json(j["distribution"]);
  c.seed = detail::get_or<std::uint64_t>(j, "seed", 0, where);
  validate(c);
  return c;
}

inline json to_json(const MarketRealization& r) {
  return {{"config", to_json(r.config)},
          {"epsilon", matrix_to_json(r.epsilon)},
          {"eta", matrix_to_json(r.eta)},
          {"worker_type", r.worker_type},
          {"employer_type", r.employer_type}};
}

inline MarketRealization market_from_json(const json& j) {
  const std::string where = "market";
  detail::expect_keys(j, {"config", "epsilon", "eta", "worker_type", "employer_type"}, where);
  MarketRealization r;
  r.config = market_config_from_json(detail::get<json>(j, "config", where));
  r.worker_type = contiguous_types(r.config.worker_counts);
  r.employer_type = contiguous_types(r.config.employer_counts);
  if (j.contains("worker_type") &&
      j["worker_type"].get<std::vector<int>>() != r.worker_type)
    throw ConfigError("market: worker_type does not match worker_counts");
  if (j.contains("employer_type") &&
      j["employer_type"].get<std::vector<int>>() != r.employer_type)
    throw ConfigError("market: employer_type does not match employer_counts");
  r.epsilon = matrix_from_json(detail::get<json>(j, "epsilon", where), r.n_employers(),
                               r.config.K, "epsilon");
  r.eta = matrix_from_json(detail::get<json>(j, "eta", where), r.n_workers(), r.config.Q, "eta");
  for (double v : r.epsilon.data())
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("epsilon entries must lie in [0, 1]");
  for (double v : r.eta.data())
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("eta entries must lie in [0, 1]");
  return r;
}

inline json to_json(const Matching& m) {
  json pairs = json::array();
  for (auto [i, j] : m.pairs) pairs.push_back({i, j});
  json counts = json::array();
  for (std::size_t k = 0; k < m.pair_counts.rows(); ++k) {
    auto row = m.pair_counts.row(k);
    counts.push_back(std::vector<int>(row.begin(), row.end()));
  }
  return {{"pairs", pairs},
          {"unmatched_workers", m.unmatched_workers},
          {"unmatched_employers", m.unmatched_employers},
          {"weight", m.weight},
          {"pair_counts", counts}};
}

// Rebuilds a matching from its pairs; unmatched sets, counts and weight are
// recomputed and must agree with the stored ones.
inline Matching matching_from_json(const json& j, const MarketRealization& r) {
  const std::string where = "matching";
  detail::expect_keys(j, {"pairs", "unmatched_workers", "unmatched_employers", "weight", "pair_counts"},
                      where);
  std::vector<Pair> raw;
  for (const auto& p : detail::get<json>(j, "pairs", where)) {
    if (!p.is_array() || p.size() != 2) throw ConfigError("matching: pairs must be [i, j]");
    const int i = p[0].get<int>(), e = p[1].get<int>();
    if (i < 0 || i >= r.n_workers() || e < 0 || e >= r.n_employers())
      throw ConfigError("matching: pair index out of range");
    raw.emplace_back(i, e);
  }
  Matching m;
  m.pair_counts = Matrix<int>(r.config.K, r.config.Q, 0);
  m.worker_partner.assign(r.n_workers(), -1);
  m.employer_partner.assign(r.n_employers(), -1);
  for (auto [i, e] : raw) {
    if (m.worker_partner[i] >= 0 || m.employer_partner[e] >= 0)
      throw ConfigError("matching: an agent appears in two pairs");
    m.worker_partner[i] = e;
    m.employer_partner[e] = i;
    ++m.pair_counts(r.worker_type[i], r.employer_type[e]);
    m.weight += match_value(r, i, e);
  }
  m.pairs = raw;
  std::sort(m.pairs.begin(), m.pairs.end());
  for (int i = 0; i < r.n_workers(); ++i)
    if (m.worker_partner[i] < 0) m.unmatched_workers.push_back(i);
  for (int e = 0; e < r.n_employers(); ++e)
    if (m.employer_partner[e] < 0) m.unmatched_employers.push_back(e);
  if (j.contains("weight") && std::abs(j["weight"].get<double>() - m.weight) >
                                  1e-9 * std::max(1.0, std::abs(m.weight)))
    throw ConfigError("matching: stored weight disagrees with the pairs");
  return m;
}

inline json to_json(const CoreBounds& b) {
  json nodes = json::array();
  for (int v = 0; v < b.size(); ++v)
    nodes.push_back({{"k", b.nodes[v].k},
                     {"q", b.nodes[v].q},
                     {"N", b.multiplicity[v]},
                     {"alpha_min", b.alpha_min[v]},
                     {"alpha_max", b.alpha_max[v]}});
  return {{"nodes", nodes},
          {"witness_min", b.witness_min},
          {"witness_max", b.witness_max},
          {"core_size", b.core_size},
          {"empty_matching", b.empty_matching}};
}

struct Solution {
  Matching matching;
  std::vector<TypePair> nodes;
  std::vector<double> witness_min, witness_max;
  std::vector<double> alpha;  // explicit price vector, empty if absent
  bool has_alpha = false;
};

inline json solution_to_json(const Matching& m, const CoreBounds& b) {
  return {{"matching", to_json(m)}, {"core", to_json(b)}, {"core_size", b.core_size}};
}

// Reads a solution file. An optional top-level "alpha" array of
// {"k", "q", "value"} objects names a single price vector to verify.
inline Solution solution_from_json(const json& j, const MarketRealization& r) {
  const std::string where = "solution";
  detail::expect_keys(j, {"matching", "core", "core_size", "alpha"}, where);
  Solution s;
  s.matching = matching_from_json(detail::get<json>(j, "matching", where), r);
  if (j.contains("core")) {
    const auto& core = j["core"];
    for (const auto& node : detail::get<json>(core, "nodes", "core"))
      s.nodes.push_back({detail::get<int>(node, "k", "core node"), detail::get<int>(node, "q", "core node")});
    s.witness_min = detail::get<std::vector<double>>(core, "witness_min", "core");
    s.witness_max = detail::get<std::vector<double>>(core, "witness_max", "core");
    if (s.witness_min.size() != s.nodes.size() || s.witness_max.size() != s.nodes.size())
      throw ConfigError("core: witness length does not match node count");
  }
  if (j.contains("alpha")) {
    s.has_alpha = true;
    std::vector<TypePair> nodes;
    for (const auto& a : j["alpha"]) {
      nodes.push_back({detail::get<int>(a, "k", "alpha"), detail::get<int>(a, "q", "alpha")});
      s.alpha.push_back(detail::get<double>(a, "value", "alpha"));
    }
    s.nodes = nodes;
  }
  if (!s.has_alpha && s.nodes.empty() && !s.matching.pairs.empty())
    throw ConfigError("solution has neither 'alpha' nor 'core' witnesses");
  return s;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read file '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// ---- experiment configs -------------------------------------------------

inline experiments::ShareTemplate share_template_from_json(const json& j) {
  const std::string where = "market template";
  detail::expect_keys(j, {"K", "Q", "worker_shares", "employer_shares", "u", "distribution"}, where);
  experiments::ShareTemplate t;
  t.K = detail::get<int>(j, "K", where);
  t.Q = detail::get<int>(j, "Q", where);
  if (t.K < 1 || t.Q < 1) throw ConfigError("K and Q must be at least 1");
  t.worker_shares = detail::get<std::vector<double>>(j, "worker_shares", where);
  t.employer_shares = detail::get<std::vector<double>>(j, "employer_shares", where);
  if (static_cast<int>(t.worker_shares.size()) != t.K ||
      static_cast<int>(t.employer_shares.size()) != t.Q)
    throw ConfigError("share lists must have K and Q entries");
  for (double s : t.worker_shares)
    if (!(s > 0)) throw ConfigError("shares must be positive");
  for (double s : t.employer_shares)
    if (!(s > 0)) throw ConfigError("shares must be positive");
  t.u = matrix_from_json(detail::get<json>(j, "u", where), t.K, t.Q, "u");
  if (j.contains("distribution")) t.distribution = distribution_from_json(j["distribution"]);
  return t;
}

inline experiments::ScalingParams scaling_params_from_json(const json& j) {
  const std::string where = "scaling config";
  detail::expect_keys(j, {"experiment", "market", "n_grid", "trials", "seed"}, where);
  experiments::ScalingParams p;
  p.market = share_template_from_json(detail::get<json>(j, "market", where));
  p.n_grid = detail::get<std::vector<int>>(j, "n_grid", where);
  p.trials = detail::get_or<int>(j, "trials", p.trials, where);
  p.seed = detail::get_or<std::uint64_t>(j, "seed", p.seed, where);
  return p;
}

inline experiments::LowerBoundParams lower_bound_params_from_json(const json& j) {
  const std::string where = "lowerbound config";
  detail::expect_keys(j, {"experiment", "K", "n_tilde_grid", "trials", "seed", "delta_exponent"}, where);
  experiments::LowerBoundParams p;
  p.K = detail::get<int>(j, "K", where);
  p.n_tilde_grid = detail::get<std::vector<int>>(j, "n_tilde_grid", where);
  p.trials = detail::get_or<int>(j, "trials", p.trials, where);
  p.seed = detail::get_or<std::uint64_t>(j, "seed", p.seed, where);
  p.delta_exponent = detail::get_or<double>(j, "delta_exponent", p.delta_exponent, where);
  return p;
}

inline experiments::ImbalanceRule imbalance_from_json(const json& j) {
  const std::string where = "imbalance";
  detail::expect_keys(j, {"rule", "fraction", "m"}, where);
  experiments::ImbalanceRule r;
  const auto rule = detail::get<std::string>(j, "rule", where);
  if (rule == "proportional") {
    r.kind = experiments::ImbalanceRule::Kind::kProportional;
    r.fraction = detail::get<double>(j, "fraction", where);
    if (!(r.fraction > 0 && r.fraction < 1)) throw ConfigError("imbalance fraction must lie in (0, 1)");
  } else if (rule == "fixed") {
    r.kind = experiments::ImbalanceRule::Kind::kFixed;
    r.m = detail::get<int>(j, "m", where);
    if (r.m < 1) throw ConfigError("imbalance m must be at least 1");
  } else {
    throw ConfigError("imbalance: unknown rule '" + rule + "'");
  }
  return r;
}

inline experiments::Theorem2Params theorem2_params_from_json(const json& j) {
  const std::string where = "theorem2 config";
  detail::expect_keys(j, {"experiment", "K", "worker_shares", "u", "distribution", "n_grid",
                          "imbalance", "trials", "seed"},
                      where);
  experiments::Theorem2Params p;
  p.K = detail::get<int>(j, "K", where);
  p.worker_shares = detail::get_or<std::vector<double>>(j, "worker_shares",
                                                        std::vector<double>(p.K, 1.0), where);
  p.u = detail::get<std::vector<double>>(j, "u", where);
  if (j.contains("distribution")) p.distribution = distribution_from_json(j["distribution"]);
  p.n_grid = detail::get<std::vector<int>>(j, "n_grid", where);
  p.imbalance = imbalance_from_json(detail::get<json>(j, "imbalance", where));
  p.trials = detail::get_or<int>(j, "trials", p.trials, where);
  p.seed = detail::get_or<std::uint64_t>(j, "seed", p.seed, where);
  return p;
}

inline experiments::DeltaRule delta_rule_from_json(const json& j) {
  const std::string where = "delta rule";
  detail::expect_keys(j, {"kind", "value", "exponent"}, where);
  experiments::DeltaRule r;
  const auto kind = detail::get<std::string>(j, "kind", where);
  if (kind == "inverse_dim") {
    r.kind = experiments::DeltaRule::Kind::kInverseDim;
  } else if (kind == "fixed") {
    r.kind = experiments::DeltaRule::Kind::kFixed;
    r.value = detail::get<double>(j, "value", where);
  } else if (kind == "power") {
    r.kind = experiments::DeltaRule::Kind::kPower;
    r.value = detail::get<double>(j, "exponent", where);
  } else {
    throw ConfigError("delta rule: unknown kind '" + kind + "'");
  }
  return r;
}

inline experiments::LemmaParams lemma_params_from_json(const json& j) {
  const std::string where = "lemmas config";
  detail::expect_keys(j, {"experiment", "n_grid", "D_grid", "delta_rules", "trials", "seed", "market"},
                      where);
  experiments::LemmaParams p;
  p.n_grid = detail::get<std::vector<int>>(j, "n_grid", where);
  p.D_grid = detail::get<std::vector<int>>(j, "D_grid", where);
  for (int n : p.n_grid)
    if (n < 2) throw ConfigError("lemmas: n must be at least 2");
  for (int D : p.D_grid)
    if (D < 1) throw ConfigError("lemmas: D must be at least 1");
  for (const auto& r : detail::get<json>(j, "delta_rules", where))
    p.delta_rules.push_back(delta_rule_from_json(r));
  p.trials = detail::get_or<int>(j, "trials", p.trials, where);
  p.seed = detail::get_or<std::uint64_t>(j, "seed", p.seed, where);
  if (j.contains("market")) {
    const auto& mj = j["market"];
    detail::expect_keys(mj, {"template", "n", "delta", "trials"}, "lemmas market");
    experiments::MarketAuditParams m;
    m.market = share_template_from_json(detail::get<json>(mj, "template", "lemmas market"));
    m.n = detail::get<int>(mj, "n", "lemmas market");
    m.delta = delta_rule_from_json(detail::get<json>(mj, "delta", "lemmas market"));
    m.trials = detail::get_or<int>(mj, "trials", p.trials, "lemmas market");
    p.market = m;
  }
  return p;
}

// ---- reports -------------------------------------------------------------

inline std::vector<std::string> aux_keys(const experiments::ExperimentReport& rep) {
  std::set<std::string> keys;
  for (const auto& t : rep.trials)
    for (const auto& [k, _] : t.aux) keys.insert(k);
  return {keys.begin(), keys.end()};
}

// One row per (grid point, trial). Depends only on the trial results, so two
// runs with the same seed give byte-identical files.
inline std::string trials_csv(const experiments::ExperimentReport& rep) {
  const auto keys = aux_keys(rep);
  std::ostringstream os;
  os << "grid_index,trial,n,seed,attempts,C,empty_matching,unmarked_components";
  for (const auto& k : keys) os << ',' << k;
  os << '\n';
  for (const auto& t : rep.trials) {
    os << t.grid_index << ',' << t.trial << ',' << t.n << ',' << t.seed << ',' << t.attempts << ','
       << detail::fmt(t.C) << ',' << t.empty_matching << ',' << t.unmarked_components;
    for (const auto& k : keys) {
      os << ',';
      if (auto it = t.aux.find(k); it != t.aux.end()) os << detail::fmt(it->second);
    }
    os << '\n';
  }
  return os.str();
}

inline std::string aggregate_csv(const experiments::ExperimentReport& rep) {
  std::set<std::string> key_set, param_set;
  for (const auto& row : rep.rows) {
    for (const auto& [k, _] : row.aux_mean) key_set.insert(k);
    for (const auto& [k, _] : row.params) param_set.insert(k);
  }
  std::ostringstream os;
  os << "grid_index,label,n,trials,mean_C,stderr_C,excluded_trials,assumption1";
  for (const auto& k : param_set) os << ",param_" << k;
  for (const auto& k : key_set) os << ",mean_" << k;
  os << '\n';
  for (const auto& row : rep.rows) {
    os << row.grid_index << ",\"" << row.label << "\"," << row.n << ',' << row.trials << ','
       << detail::fmt(row.mean_C) << ',' << detail::fmt(row.stderr_C) << ',' << row.excluded_trials
       << ',' << row.assumption1;
    for (const auto& k : param_set) {
      os << ',';
      if (auto it = row.params.find(k); it != row.params.end()) os << detail::fmt(it->second);
    }
    for (const auto& k : key_set) {
      os << ',';
      if (auto it = row.aux_mean.find(k); it != row.aux_mean.end()) os << detail::fmt(it->second);
    }
    os << '\n';
  }
  return os.str();
}

inline json summary_json(const experiments::ExperimentReport& rep) {
  json rows = json::array();
  for (const auto& row : rep.rows) {
    json aux = json::object();
    for (const auto& [k, v] : row.aux_mean) aux[k] = detail::number_or_null(v);
    rows.push_back({{"grid_index", row.grid_index},
                    {"label", row.label},
                    {"n", row.n},
                    {"params", row.params},
                    {"trials", row.trials},
                    {"mean_C", detail::number_or_null(row.mean_C)},
                    {"stderr_C", detail::number_or_null(row.stderr_C)},
                    {"excluded_trials", row.excluded_trials},
                    {"assumption1", row.assumption1},
                    {"aux_mean", aux}});
  }
  json freqs = json::object();
  for (const auto& [k, v] : rep.frequencies) freqs[k] = detail::number_or_null(v);
  return {{"experiment", rep.id},
          {"parameters", rep.parameters},
          {"seed", rep.seed},
          {"workers", rep.workers},
          {"fit",
           {{"slope", detail::number_or_null(rep.fit.slope)},
            {"intercept", detail::number_or_null(rep.fit.intercept)},
            {"slope_stderr", detail::number_or_null(rep.fit.slope_stderr)},
            {"points", rep.fit.points}}},
          {"rows", rows},
          {"frequencies", freqs},
          {"counters", rep.counters},
          {"lemma1_violations", rep.lemma1_violations},
          {"wall_clock_seconds", rep.wall_clock_seconds}};
}

// Writes trials.csv, aggregate.csv, summary.json and one CSV per extra table.
inline void write_report(const experiments::ExperimentReport& rep, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "'");
  write_text_file(dir / "trials.csv", trials_csv(rep));
  write_text_file(dir / "aggregate.csv", aggregate_csv(rep));
  write_json_file(dir / "summary.json", summary_json(rep));
  for (const auto& [name, lines] : rep.tables) {
    std::string text;
    for (const auto& l : lines) text += l + '\n';
    write_text_file(dir / (name + ".csv"), text);
  }
}

}  // namespace coregauge::io
