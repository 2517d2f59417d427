#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "coregauge/corepoly.hpp"
#include "coregauge/error.hpp"
#include "coregauge/market.hpp"
#include "coregauge/matching.hpp"

// Small-scale ground truth. Nothing here calls into the matching solvers or
// the Bellman-Ford code; the only shared pieces are the input/output structs.
namespace coregauge::oracle {

inline constexpr int kMaxBruteForceSide = 8;
inline constexpr int kMaxClosureNodes = 12;
inline constexpr double kStabilityTolerance = 1e-9;

namespace detail {

inline double phi(const MarketRealization& r, int i, int j) {
  const int k = r.worker_type[i], q = r.employer_type[j];
  return r.config.u(k, q) + r.epsilon(j, k) + r.eta(i, q);
}

struct Search {
  const MarketRealization& r;
  std::vector<int> partner;  // per worker, -1 when unmatched
  std::vector<char> taken;
  double value = 0.0;
  double best = 0.0;
  std::vector<int> best_partner;

  void visit(int i) {
    if (i == r.n_workers()) {
      if (value > best + 1e-12) {
        best = value;
        best_partner = partner;
      }
      return;
    }
    visit(i + 1);  // leave i unmatched
    for (int j = 0; j < r.n_employers(); ++j) {
      if (taken[j]) continue;
      const double v = phi(r, i, j);
      if (v <= 0.0) continue;
      taken[j] = 1;
      partner[i] = j;
      value += v;
      visit(i + 1);
      value -= v;
      partner[i] = -1;
      taken[j] = 0;
    }
  }
};

}  // namespace detail

// Exhaustive search over all matchings. Within each type-pair block the
// matched workers and employers are re-paired in ascending index order.
inline Matching brute_force_matching(const MarketRealization& r) {
  if (r.n_workers() > kMaxBruteForceSide || r.n_employers() > kMaxBruteForceSide)
    throw CapabilityError("brute-force matching supports at most 8 agents per side");
  detail::Search s{r, std::vector<int>(r.n_workers(), -1),
                   std::vector<char>(r.n_employers(), 0), 0.0, 0.0, {}};
  s.best_partner = s.partner;
  s.visit(0);

  const int K = r.config.K, Q = r.config.Q;
  std::map<std::pair<int, int>, std::pair<std::vector<int>, std::vector<int>>> blocks;
  std::vector<char> matched_e(r.n_employers(), 0);
  for (int i = 0; i < r.n_workers(); ++i) {
    const int j = s.best_partner[i];
    if (j < 0) continue;
    matched_e[j] = 1;
    auto& b = blocks[{r.worker_type[i], r.employer_type[j]}];
    b.first.push_back(i);
    b.second.push_back(j);
  }

  Matching m;
  m.pair_counts = Matrix<int>(K, Q, 0);
  m.worker_partner.assign(r.n_workers(), -1);
  m.employer_partner.assign(r.n_employers(), -1);
  for (auto& [key, b] : blocks) {
    std::sort(b.first.begin(), b.first.end());
    std::sort(b.second.begin(), b.second.end());
    for (std::size_t t = 0; t < b.first.size(); ++t) {
      m.pairs.emplace_back(b.first[t], b.second[t]);
      m.worker_partner[b.first[t]] = b.second[t];
      m.employer_partner[b.second[t]] = b.first[t];
    }
    m.pair_counts(key.first, key.second) = static_cast<int>(b.first.size());
  }
  std::sort(m.pairs.begin(), m.pairs.end());
  for (auto [i, j] : m.pairs) m.weight += detail::phi(r, i, j);
  for (int i = 0; i < r.n_workers(); ++i)
    if (m.worker_partner[i] < 0) m.unmatched_workers.push_back(i);
  for (int j = 0; j < r.n_employers(); ++j)
    if (!matched_e[j]) m.unmatched_employers.push_back(j);
  return m;
}

struct StabilityReport {
  bool stable = true;
  std::vector<std::string> violations;  // capped at kMaxViolations
  std::size_t violation_count = 0;
  static constexpr std::size_t kMaxViolations = 32;

  void add(std::string what) {
    stable = false;
    ++violation_count;
    if (violations.size() < kMaxViolations) violations.push_back(std::move(what));
  }
};

using PriceMap = std::map<std::pair<int, int>, double>;  // (k, q) -> alpha

// Payoffs implied by alpha: gamma_i = eta~^q_i - alpha_kq, gamma_j = eps^k_j + alpha_kq
// for matched agents, zero otherwise. Checks individual rationality,
// exact splitting, and every worker-employer pair for blocking.
inline StabilityReport verify_stability(const MarketRealization& r, const Matching& m,
                                        const PriceMap& alpha) {
  const double tol = kStabilityTolerance;
  std::vector<double> gw(r.n_workers(), 0.0), ge(r.n_employers(), 0.0);
  StabilityReport rep;
  for (auto [i, j] : m.pairs) {
    const int k = r.worker_type[i], q = r.employer_type[j];
    auto it = alpha.find({k, q});
    if (it == alpha.end())
      throw UsageError("alpha has no coordinate for matched type pair (" + std::to_string(k) +
                       "," + std::to_string(q) + ")");
    gw[i] = r.config.u(k, q) + r.eta(i, q) - it->second;
    ge[j] = r.epsilon(j, k) + it->second;
    if (std::abs(gw[i] + ge[j] - detail::phi(r, i, j)) > tol)
      rep.add("pair (" + std::to_string(i) + "," + std::to_string(j) + ") does not split its value");
  }
  for (int i = 0; i < r.n_workers(); ++i)
    if (gw[i] < -tol) rep.add("gamma_i < 0 for worker " + std::to_string(i));
  for (int j = 0; j < r.n_employers(); ++j)
    if (ge[j] < -tol) rep.add("gamma_j < 0 for employer " + std::to_string(j));
  for (int i = 0; i < r.n_workers(); ++i)
    for (int j = 0; j < r.n_employers(); ++j)
      if (gw[i] + ge[j] < detail::phi(r, i, j) - tol)
        rep.add("worker " + std::to_string(i) + " and employer " + std::to_string(j) + " block");
  return rep;
}

inline PriceMap price_map(const std::vector<TypePair>& nodes, const std::vector<double>& values) {
  if (nodes.size() != values.size()) throw UsageError("alpha length does not match node count");
  PriceMap out;
  for (std::size_t v = 0; v < nodes.size(); ++v) out[{nodes[v].k, nodes[v].q}] = values[v];
  return out;
}

// Floyd-Warshall over the nodes plus an origin pinned at zero. d[s][v] is
// the largest feasible alpha_v, -d[v][s] the smallest.
inline CoreBounds closure_bounds(const ConstraintGraph& g) {
  const int n = g.size();
  if (n > kMaxClosureNodes) throw CapabilityError("closure oracle supports at most 12 nodes");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int s = n;
  std::vector<std::vector<double>> d(n + 1, std::vector<double>(n + 1, kInf));
  for (int v = 0; v <= n; ++v) d[v][v] = 0.0;
  for (const auto& e : g.diff_edges) d[e.from][e.to] = std::min(d[e.from][e.to], e.bound);
  for (int v = 0; v < n; ++v) {
    d[s][v] = std::min(d[s][v], g.upper_box[v]);
    d[v][s] = std::min(d[v][s], -g.lower_box[v]);
  }
  for (int via = 0; via <= n; ++via)
    for (int a = 0; a <= n; ++a) {
      if (d[a][via] == kInf) continue;
      for (int b = 0; b <= n; ++b)
        if (d[via][b] < kInf) d[a][b] = std::min(d[a][b], d[a][via] + d[via][b]);
    }
  for (int v = 0; v <= n; ++v)
    if (d[v][v] < -kStabilityTolerance)
      throw InconsistencyError("closure found a negative cycle through node " + std::to_string(v));

  CoreBounds b;
  b.nodes = g.nodes;
  b.multiplicity = g.multiplicity;
  b.alpha_max.resize(n);
  b.alpha_min.resize(n);
  for (int v = 0; v < n; ++v) {
    b.alpha_max[v] = d[s][v];
    b.alpha_min[v] = -d[v][s];
  }
  b.witness_max = b.alpha_max;
  b.witness_min = b.alpha_min;
  double num = 0.0, den = 0.0;
  for (int v = 0; v < n; ++v) {
    num += b.multiplicity[v] * (b.alpha_max[v] - b.alpha_min[v]);
    den += b.multiplicity[v];
  }
  b.core_size = den > 0 ? num / den : 0.0;
  b.empty_matching = n == 0;
  return b;
}

}  // namespace coregauge::oracle
