#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "coregauge/market.hpp"

namespace coregauge {

using Pair = std::pair<int, int>;  // (worker, employer)

struct Matching {
  std::vector<Pair> pairs;  // sorted by worker index
  std::vector<int> unmatched_workers;
  std::vector<int> unmatched_employers;
  double weight = 0.0;
  Matrix<int> pair_counts;  // K x Q, N(k, q)
  std::vector<int> worker_partner;    // -1 when unmatched
  std::vector<int> employer_partner;  // -1 when unmatched

  bool empty() const { return pairs.empty(); }
  int total_pairs() const { return static_cast<int>(pairs.size()); }
};

// Canonical form of a matching: pairs with value <= 0 are dropped, and inside
// every (k, q) block the matched workers and employers are paired in ascending
// index order. Under separable values every within-block bijection has the
// same weight, so this loses nothing downstream.
inline Matching canonicalize(const MarketRealization& r, std::vector<Pair> raw) {
  const int K = r.config.K;
  const int Q = r.config.Q;
  std::vector<std::vector<int>> block_workers(K * Q), block_employers(K * Q);
  std::vector<char> seen_w(r.n_workers(), 0), seen_e(r.n_employers(), 0);
  for (auto [i, j] : raw) {
    if (seen_w.at(i) || seen_e.at(j))
      throw InconsistencyError("agent appears in more than one pair");
    seen_w[i] = seen_e[j] = 1;
    if (match_value(r, i, j) <= 0.0) continue;
    const int b = r.worker_type[i] * Q + r.employer_type[j];
    block_workers[b].push_back(i);
    block_employers[b].push_back(j);
  }
  Matching m;
  m.pair_counts = Matrix<int>(K, Q, 0);
  m.worker_partner.assign(r.n_workers(), -1);
  m.employer_partner.assign(r.n_employers(), -1);
  for (int b = 0; b < K * Q; ++b) {
    auto& ws = block_workers[b];
    auto& es = block_employers[b];
    std::sort(ws.begin(), ws.end());
    std::sort(es.begin(), es.end());
    for (std::size_t t = 0; t < ws.size(); ++t) {
      m.pairs.emplace_back(ws[t], es[t]);
      m.worker_partner[ws[t]] = es[t];
      m.employer_partner[es[t]] = ws[t];
    }
    m.pair_counts(b / Q, b % Q) = static_cast<int>(ws.size());
  }
  std::sort(m.pairs.begin(), m.pairs.end());
  for (auto [i, j] : m.pairs) m.weight += match_value(r, i, j);
  for (int i = 0; i < r.n_workers(); ++i)
    if (m.worker_partner[i] < 0) m.unmatched_workers.push_back(i);
  for (int j = 0; j < r.n_employers(); ++j)
    if (m.employer_partner[j] < 0) m.unmatched_employers.push_back(j);
  return m;
}

namespace detail {

// Successive-shortest-path min-cost flow, specialised to unit capacities.
class UnitFlowNetwork {
 public:
  explicit UnitFlowNetwork(int nodes) : adj_(nodes) {}

  void add_edge(int from, int to, double cost) {
    adj_[from].push_back({to, static_cast<int>(adj_[to].size()), 1, cost, true});
    adj_[to].push_back({from, static_cast<int>(adj_[from].size()) - 1, 0, -cost, false});
  }

  // Pushes units from source to sink while the cheapest augmenting path has
  // negative cost. `potential` must be feasible for the initial residual graph.
  void run(int source, int sink, std::vector<double> potential) {
    const int n = static_cast<int>(adj_.size());
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n);
    std::vector<int> prev_node(n), prev_edge(n);
    std::vector<char> done(n);
    using Item = std::pair<double, int>;
    for (;;) {
      std::fill(dist.begin(), dist.end(), kInf);
      std::fill(done.begin(), done.end(), 0);
      std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
      dist[source] = 0.0;
      heap.push({0.0, source});
      while (!heap.empty()) {
        auto [d, v] = heap.top();
        heap.pop();
        if (done[v]) continue;
        done[v] = 1;
        if (v == sink) break;
        for (int e = 0; e < static_cast<int>(adj_[v].size()); ++e) {
          const Edge& ed = adj_[v][e];
          if (ed.cap == 0) continue;
          const double reduced =
              std::max(0.0, ed.cost + potential[v] - potential[ed.to]);
          if (d + reduced < dist[ed.to]) {
            dist[ed.to] = d + reduced;
            prev_node[ed.to] = v;
            prev_edge[ed.to] = e;
            heap.push({dist[ed.to], ed.to});
          }
        }
      }
      if (!done[sink]) return;
      const double path_cost = dist[sink] + potential[sink] - potential[source];
      if (path_cost >= 0.0) return;
      for (int v = 0; v < n; ++v) potential[v] += std::min(dist[v], dist[sink]);
      for (int v = sink; v != source; v = prev_node[v]) {
        Edge& ed = adj_[prev_node[v]][prev_edge[v]];
        ed.cap -= 1;
        adj_[v][ed.rev].cap += 1;
      }
    }
  }

  // Heads of saturated forward edges leaving `v` whose head lies in [lo, hi).
  std::vector<int> flow_targets(int v, int lo, int hi) const {
    std::vector<int> out;
    for (const Edge& ed : adj_[v])
      if (ed.forward && ed.cap == 0 && ed.to >= lo && ed.to < hi)
        out.push_back(ed.to);
    return out;
  }

 private:
  struct Edge {
    int to;
    int rev;
    int cap;
    double cost;
    bool forward;
  };

  std::vector<std::vector<Edge>> adj_;
};

}  // namespace detail

// Maximum-weight matching through the type structure of the values: a worker
// reaches employer j only through a hub (type(i), q), with the worker paying
// eta_tilde on entry and the employer adding epsilon on exit. Any flow
// decomposes into worker -> hub -> employer paths whose value is exactly
// match_value, so the max-profit flow is a maximum-weight matching. The network
// has O(n (K + Q)) edges instead of n_L * n_E.
inline std::vector<Pair> type_network_pairs(const MarketRealization& r) {
  const int K = r.config.K, Q = r.config.Q;
  const int nL = r.n_workers(), nE = r.n_employers();
  const int source = 0;
  const int worker0 = 1;
  const int hub0 = worker0 + nL;
  const int emp0 = hub0 + K * Q;
  const int sink = emp0 + nE;
  detail::UnitFlowNetwork net(sink + 1);

  // Initial potentials: shortest distances in the (acyclic) initial graph.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> pot(sink + 1, kInf);
  pot[source] = 0.0;
  for (int i = 0; i < nL; ++i) {
    net.add_edge(source, worker0 + i, 0.0);
    pot[worker0 + i] = 0.0;
    for (int q = 0; q < Q; ++q) {
      const int hub = hub0 + r.worker_type[i] * Q + q;
      const double cost = -r.eta_tilde(i, q);
      net.add_edge(worker0 + i, hub, cost);
      pot[hub] = std::min(pot[hub], cost);
    }
  }
  for (int j = 0; j < nE; ++j) {
    const int q = r.employer_type[j];
    for (int k = 0; k < K; ++k) {
      const int hub = hub0 + k * Q + q;
      const double cost = -r.epsilon(j, k);
      net.add_edge(hub, emp0 + j, cost);
      if (pot[hub] < kInf) pot[emp0 + j] = std::min(pot[emp0 + j], pot[hub] + cost);
    }
    net.add_edge(emp0 + j, sink, 0.0);
    pot[sink] = std::min(pot[sink], pot[emp0 + j]);
  }
  // Unreachable nodes never enter a shortest path; any finite value works.
  for (double& p : pot)
    if (p == kInf) p = 0.0;
  net.run(source, sink, std::move(pot));

  std::vector<std::vector<int>> hub_workers(K * Q);
  for (int i = 0; i < nL; ++i)
    for (int hub : net.flow_targets(worker0 + i, hub0, emp0))
      hub_workers[hub - hub0].push_back(i);
  std::vector<Pair> pairs;
  for (int h = 0; h < K * Q; ++h) {
    auto employers = net.flow_targets(hub0 + h, emp0, sink);
    auto& ws = hub_workers[h];
    if (ws.size() != employers.size())
      throw InconsistencyError("flow conservation violated at a type hub");
    std::sort(ws.begin(), ws.end());
    std::sort(employers.begin(), employers.end());
    for (std::size_t t = 0; t < ws.size(); ++t)
      pairs.emplace_back(ws[t], employers[t] - emp0);
  }
  return pairs;
}

// Rectangular Hungarian method (shortest augmenting paths with potentials) on
// costs -max(value, 0). O(rows^2 * cols) with rows = min(n_L, n_E).
inline std::vector<Pair> hungarian_pairs(const MarketRealization& r) {
  const int nL = r.n_workers(), nE = r.n_employers();
  const bool transpose = nL > nE;
  const int rows = transpose ? nE : nL;
  const int cols = transpose ? nL : nE;
  if (rows == 0) return {};
  auto cost = [&](int a, int b) {
    const double v = transpose ? match_value(r, b, a) : match_value(r, a, b);
    return -std::max(v, 0.0);
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based arrays, column 0 is the virtual start.
  std::vector<double> row_pot(rows + 1, 0.0), col_pot(cols + 1, 0.0);
  std::vector<int> col_owner(cols + 1, 0), way(cols + 1, 0);
  std::vector<double> min_slack(cols + 1);
  std::vector<char> used(cols + 1);
  for (int row = 1; row <= rows; ++row) {
    col_owner[0] = row;
    int col0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const int r0 = col_owner[col0];
      double delta = kInf;
      int col1 = 0;
      for (int c = 1; c <= cols; ++c) {
        if (used[c]) continue;
        const double cur = cost(r0 - 1, c - 1) - row_pot[r0] - col_pot[c];
        if (cur < min_slack[c]) {
          min_slack[c] = cur;
          way[c] = col0;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          col1 = c;
        }
      }
      for (int c = 0; c <= cols; ++c) {
        if (used[c]) {
          row_pot[col_owner[c]] += delta;
          col_pot[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col0 = col1;
    } while (col_owner[col0] != 0);
    do {
      const int col1 = way[col0];
      col_owner[col0] = col_owner[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<Pair> pairs;
  for (int c = 1; c <= cols; ++c) {
    if (col_owner[c] == 0) continue;
    const int a = col_owner[c] - 1, b = c - 1;
    pairs.push_back(transpose ? Pair{b, a} : Pair{a, b});
  }
  return pairs;
}

// Maximum-weight (not necessarily perfect) matching, canonicalized. Pairs of
// nonpositive value are never matched.
inline Matching max_weight_matching(const MarketRealization& r) {
  return canonicalize(r, type_network_pairs(r));
}

// Same contract, computed by the dense Hungarian method. Used as a second,
// independent solver in cross-checks.
inline Matching max_weight_matching_hungarian(const MarketRealization& r) {
  return canonicalize(r, hungarian_pairs(r));
}

struct DegeneracyReport {
  struct Tie {
    int agent;       // worker index if `worker_side`, else employer index
    bool worker_side;
    int partner_a, partner_b;
    double gap;
  };
  struct NearZero {
    int worker, employer;
    double value;
  };
  std::vector<Tie> ties;            // first kMaxRecords only
  std::vector<NearZero> near_zero;  // first kMaxRecords only
  std::size_t tie_count = 0;
  std::size_t near_zero_count = 0;

  static constexpr std::size_t kMaxRecords = 64;
  bool flagged() const { return tie_count > 0 || near_zero_count > 0; }
};

// Scans for the measure-zero events the model excludes: an agent with two
// partners of (numerically) equal value, and values at zero. Ties are
// searched per agent; see README for why unrelated coincidences between
// disjoint pairs are not reported.
//
// For a fixed agent, partners of one type are ordered by a single column of
// epsilon (or eta), so each agent's sorted value list is a Q-way (K-way)
// merge of presorted columns: O(n (K + Q)) per agent instead of O(n log n).
inline DegeneracyReport degeneracy_scan(const MarketRealization& r,
                                        double tolerance = 1e-12) {
  DegeneracyReport rep;
  const int K = r.config.K, Q = r.config.Q;
  const int nL = r.n_workers(), nE = r.n_employers();

  // by_column[type][coord]: partners of that type sorted by their coordinate.
  auto presort = [](int types, int coords, const std::vector<int>& type_of,
                    const Matrix<double>& x) {
    std::vector<std::vector<std::vector<int>>> out(
        types, std::vector<std::vector<int>>(coords));
    for (int t = 0; t < types; ++t)
      for (int c = 0; c < coords; ++c) {
        auto& v = out[t][c];
        for (int a = 0; a < static_cast<int>(type_of.size()); ++a)
          if (type_of[a] == t) v.push_back(a);
        std::stable_sort(v.begin(), v.end(),
                         [&](int a, int b) { return x(a, c) < x(b, c); });
      }
    return out;
  };
  const auto employers_by = presort(Q, K, r.employer_type, r.epsilon);
  const auto workers_by = presort(K, Q, r.worker_type, r.eta);

  std::vector<std::size_t> cursor;
  auto scan = [&](bool worker_side, int agent) {
    const int own = worker_side ? r.worker_type[agent] : r.employer_type[agent];
    const int lists = worker_side ? Q : K;
    auto list = [&](int t) -> const std::vector<int>& {
      return worker_side ? employers_by[t][own] : workers_by[t][own];
    };
    auto value = [&](int other) {
      return worker_side ? match_value(r, agent, other) : match_value(r, other, agent);
    };
    cursor.assign(lists, 0);
    bool have_prev = false;
    double prev = 0.0;
    int prev_other = -1;
    for (;;) {
      int best_t = -1;
      double best = 0.0;
      for (int t = 0; t < lists; ++t) {
        if (cursor[t] == list(t).size()) continue;
        const double v = value(list(t)[cursor[t]]);
        if (best_t < 0 || v < best) {
          best_t = t;
          best = v;
        }
      }
      if (best_t < 0) break;
      const int other = list(best_t)[cursor[best_t]++];
      if (have_prev && best - prev <= tolerance) {
        if (rep.ties.size() < DegeneracyReport::kMaxRecords)
          rep.ties.push_back({agent, worker_side, prev_other, other, best - prev});
        ++rep.tie_count;
      }
      have_prev = true;
      prev = best;
      prev_other = other;
    }
  };
  for (int i = 0; i < nL; ++i) scan(true, i);
  for (int j = 0; j < nE; ++j) scan(false, j);
  for (int i = 0; i < nL; ++i)
    for (int j = 0; j < nE; ++j) {
      const double v = match_value(r, i, j);
      if (std::abs(v) > tolerance) continue;
      if (rep.near_zero.size() < DegeneracyReport::kMaxRecords)
        rep.near_zero.push_back({i, j, v});
      ++rep.near_zero_count;
    }
  return rep;
}

}  // namespace coregauge
