#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "coregauge/geometry.hpp"
#include "coregauge/market.hpp"
#include "coregauge/matching.hpp"

namespace coregauge {

inline constexpr double kCoreTolerance = 1e-9;

// A matched type pair (k, q) with N(k, q) > 0; one coordinate of the price
// vector alpha.
struct TypePair {
  int k = 0;
  int q = 0;
  friend bool operator==(const TypePair&, const TypePair&) = default;
};

// alpha[to] - alpha[from] <= bound
struct DiffEdge {
  int from = 0;
  int to = 0;
  double bound = 0.0;
};

struct ConstraintGraph {
  std::vector<TypePair> nodes;
  std::vector<int> multiplicity;  // N(k, q) per node
  std::vector<DiffEdge> diff_edges;
  std::vector<double> lower_box, upper_box;
  std::vector<std::string> lower_origin, upper_origin;  // which condition set the box

  int size() const { return static_cast<int>(nodes.size()); }
  int index_of(int k, int q) const {
    for (int v = 0; v < size(); ++v)
      if (nodes[v].k == k && nodes[v].q == q) return v;
    return -1;
  }

  void add_node(TypePair p, int n) {
    nodes.push_back(p);
    multiplicity.push_back(n);
    lower_box.push_back(-std::numeric_limits<double>::infinity());
    upper_box.push_back(std::numeric_limits<double>::infinity());
    lower_origin.emplace_back();
    upper_origin.emplace_back();
  }
  void tighten_lower(int v, double value, const char* origin) {
    if (value > lower_box[v]) {
      lower_box[v] = value;
      lower_origin[v] = origin;
    }
  }
  void tighten_upper(int v, double value, const char* origin) {
    if (value < upper_box[v]) {
      upper_box[v] = value;
      upper_origin[v] = origin;
    }
  }
};

struct CoreBounds {
  std::vector<TypePair> nodes;
  std::vector<int> multiplicity;
  std::vector<double> alpha_min, alpha_max;
  // Feasible price vectors attaining every minimum (resp. maximum) at once;
  // the core is a lattice, so one vector serves all nodes.
  std::vector<double> witness_min, witness_max;
  double core_size = 0.0;
  bool empty_matching = false;

  int size() const { return static_cast<int>(nodes.size()); }
  std::vector<double> midpoint() const {
    std::vector<double> mid(witness_min.size());
    for (std::size_t v = 0; v < mid.size(); ++v)
      mid[v] = 0.5 * (witness_min[v] + witness_max[v]);
    return mid;
  }
  double width(int v) const { return alpha_max[v] - alpha_min[v]; }
};

namespace detail {

inline std::string describe(const TypePair& p) {
  std::ostringstream os;
  os << "(" << p.k << "," << p.q << ")";
  return os.str();
}

// Bellman-Ford on the nodes plus a virtual source (index n). Upper boxes are
// edges source -> v, lower boxes edges v -> source. Returns distances from
// the source, or from every node to the source when `reverse` is set.
inline std::vector<double> source_distances(const ConstraintGraph& g, bool reverse) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int n = g.size();
  struct Arc {
    int from, to;
    double w;
  };
  std::vector<Arc> arcs;
  for (const auto& e : g.diff_edges) arcs.push_back({e.from, e.to, e.bound});
  for (int v = 0; v < n; ++v) {
    if (std::isfinite(g.upper_box[v])) arcs.push_back({n, v, g.upper_box[v]});
    if (std::isfinite(g.lower_box[v])) arcs.push_back({v, n, -g.lower_box[v]});
  }
  if (reverse)
    for (auto& a : arcs) std::swap(a.from, a.to);
  std::vector<double> dist(n + 1, kInf);
  dist[n] = 0.0;
  for (int round = 0; round <= n; ++round) {
    bool changed = false;
    for (const auto& a : arcs) {
      if (dist[a.from] == kInf) continue;
      const double cand = dist[a.from] + a.w;
      // Improvements below the tolerance are rounding noise on zero-weight cycles.
      if (cand < dist[a.to] - (dist[a.to] == kInf ? 0.0 : 1e-12)) {
        dist[a.to] = cand;
        changed = true;
      }
    }
    if (!changed) {
      dist.pop_back();
      return dist;
    }
  }
  throw InconsistencyError("core constraint graph has a negative cycle");
}

// Bellman-Ford with every node at distance 0, so cycles the source cannot
// reach are found too.
inline void check_no_negative_cycle(const ConstraintGraph& g) {
  const int n = g.size();
  std::vector<double> dist(n, 0.0);
  for (int round = 0; round <= n; ++round) {
    bool changed = false;
    for (const auto& e : g.diff_edges) {
      const double cand = dist[e.from] + e.bound;
      if (cand < dist[e.to] - 1e-12) {
        dist[e.to] = cand;
        changed = true;
      }
    }
    if (!changed) return;
  }
  throw InconsistencyError("core constraint graph has a negative cycle");
}

}  // namespace detail

// Difference-constraint description of the core over prices of matched type
// pairs. Families:
//   pairwise   both agents matched (difference edges between nodes);
//   box        nonnegativity of matched agents and blocking by unmatched
//              agents of the node's own types;
//   cross-box  blocking by unmatched agents of one type against agents
//              matched within a different type pair.
inline ConstraintGraph build_constraint_graph(const MarketRealization& r, const Matching& m) {
  const int K = r.config.K, Q = r.config.Q;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  for (int i : m.unmatched_workers)
    for (int j : m.unmatched_employers)
      if (match_value(r, i, j) > kCoreTolerance)
        throw InconsistencyError("unmatched worker " + std::to_string(i) +
                                 " and unmatched employer " + std::to_string(j) +
                                 " form a profitable pair; matching is not maximum");

  ConstraintGraph g;
  std::vector<std::vector<int>> block_workers, block_employers;
  for (int k = 0; k < K; ++k)
    for (int q = 0; q < Q; ++q)
      if (m.pair_counts(k, q) > 0) {
        g.add_node({k, q}, m.pair_counts(k, q));
        block_workers.emplace_back();
        block_employers.emplace_back();
      }
  const int n = g.size();
  for (auto [i, j] : m.pairs) {
    const int v = g.index_of(r.worker_type[i], r.employer_type[j]);
    block_workers[v].push_back(i);
    block_employers[v].push_back(j);
  }

  // Largest eta_tilde^q among unmatched workers of type k, and largest
  // epsilon^k among unmatched employers of type q.
  Matrix<double> unmatched_eta(K, Q, -kInf), unmatched_eps(Q, K, -kInf);
  for (int i : m.unmatched_workers)
    for (int q = 0; q < Q; ++q)
      unmatched_eta(r.worker_type[i], q) =
          std::max(unmatched_eta(r.worker_type[i], q), r.eta_tilde(i, q));
  for (int j : m.unmatched_employers)
    for (int k = 0; k < K; ++k)
      unmatched_eps(r.employer_type[j], k) =
          std::max(unmatched_eps(r.employer_type[j], k), r.epsilon(j, k));

  // Pairwise: worker i in b=(k',q'), employer j in a=(k,q):
  //   alpha_b - alpha_a <= (eta~^{q'}_i - eta~^q_i) + (eps^k_j - eps^{k'}_j).
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      const auto [k, q] = g.nodes[a];
      const auto [k2, q2] = g.nodes[b];
      double worker_part = kInf, employer_part = kInf;
      for (int i : block_workers[b])
        worker_part = std::min(worker_part, r.eta_tilde(i, q2) - r.eta_tilde(i, q));
      for (int j : block_employers[a])
        employer_part = std::min(employer_part, r.epsilon(j, k) - r.epsilon(j, k2));
      g.diff_edges.push_back({a, b, worker_part + employer_part});
    }
  }

  for (int v = 0; v < n; ++v) {
    const auto [k, q] = g.nodes[v];
    double min_eps = kInf, min_eta = kInf;
    for (int j : block_employers[v]) min_eps = std::min(min_eps, r.epsilon(j, k));
    for (int i : block_workers[v]) min_eta = std::min(min_eta, r.eta_tilde(i, q));
    g.tighten_lower(v, -min_eps, "matched employer payoff >= 0");
    g.tighten_upper(v, min_eta, "matched worker payoff >= 0");
    g.tighten_upper(v, -unmatched_eps(q, k), "unmatched employer of same type");
    g.tighten_lower(v, unmatched_eta(k, q), "unmatched worker of same type");

    // Unmatched worker of type kk against an employer matched in (k, q).
    for (int kk = 0; kk < K; ++kk) {
      if (kk == k || unmatched_eta(kk, q) == -kInf) continue;
      double spread = -kInf;
      for (int j : block_employers[v]) spread = std::max(spread, r.epsilon(j, kk) - r.epsilon(j, k));
      g.tighten_lower(v, unmatched_eta(kk, q) + spread, "unmatched worker of other type");
    }
    // Unmatched employer of type qq against a worker matched in (k, q).
    for (int qq = 0; qq < Q; ++qq) {
      if (qq == q || unmatched_eps(qq, k) == -kInf) continue;
      double spread = kInf;
      for (int i : block_workers[v])
        spread = std::min(spread, r.eta_tilde(i, q) - r.eta_tilde(i, qq));
      g.tighten_upper(v, spread - unmatched_eps(qq, k), "unmatched employer of other type");
    }
  }

  for (int v = 0; v < n; ++v)
    if (g.lower_box[v] > g.upper_box[v] + kCoreTolerance)
      throw InconsistencyError("empty price interval at node " + detail::describe(g.nodes[v]) +
                               ": lower bound from '" + g.lower_origin[v] +
                               "' exceeds upper bound from '" + g.upper_origin[v] + "'");
  detail::check_no_negative_cycle(g);
  return g;
}

inline double core_size_from(const std::vector<int>& multiplicity,
                             const std::vector<double>& lo,
                             const std::vector<double>& hi) {
  double num = 0.0;
  long long den = 0;
  for (std::size_t v = 0; v < multiplicity.size(); ++v) {
    num += multiplicity[v] * (hi[v] - lo[v]);
    den += multiplicity[v];
  }
  return den == 0 ? 0.0 : num / static_cast<double>(den);
}

// Per-node price extremes over the core, by shortest paths from a virtual
// source: alpha_max[v] = d(source, v), alpha_min[v] = -d(v, source).
inline CoreBounds core_bounds(const ConstraintGraph& g) {
  detail::check_no_negative_cycle(g);
  CoreBounds b;
  b.nodes = g.nodes;
  b.multiplicity = g.multiplicity;
  b.witness_max = detail::source_distances(g, false);
  auto to_source = detail::source_distances(g, true);
  b.witness_min.resize(to_source.size());
  for (std::size_t v = 0; v < to_source.size(); ++v) b.witness_min[v] = -to_source[v];
  b.alpha_max = b.witness_max;
  b.alpha_min = b.witness_min;
  for (int v = 0; v < b.size(); ++v)
    if (b.alpha_min[v] > b.alpha_max[v] + kCoreTolerance)
      throw InconsistencyError("price interval inverted at node " + detail::describe(b.nodes[v]));
  b.core_size = core_size_from(b.multiplicity, b.alpha_min, b.alpha_max);
  b.empty_matching = b.nodes.empty();
  return b;
}

struct CoreSize {
  double value = 0.0;
  bool empty_matching = false;  // defined as zero
};

// N-weighted mean width of the price intervals over matched type pairs.
inline CoreSize core_size(const CoreBounds& b, const Matching& m) {
  CoreSize out;
  if (m.empty()) {
    out.empty_matching = true;
    return out;
  }
  std::vector<int> mult(b.size());
  for (int v = 0; v < b.size(); ++v) {
    const auto [k, q] = b.nodes[v];
    mult[v] = m.pair_counts.at(k, q);
  }
  out.value = core_size_from(mult, b.alpha_min, b.alpha_max);
  return out;
}

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

// Bipartite graph on types; vertex k < K is worker type k, vertex K + q is
// employer type q. A type is marked when one of its agents is unmatched.
struct TypeAdjacencyGraph {
  int K = 0, Q = 0;
  std::vector<std::pair<int, int>> edges;  // (k, q) with N(k, q) > 0
  std::vector<char> marked;
  std::vector<int> distance;   // to nearest marked vertex, kUnreachable if none
  std::vector<int> component;  // component id per vertex
  int component_count = 0;
  int unmarked_components = 0;

  int vertices() const { return K + Q; }
};

inline TypeAdjacencyGraph type_adjacency_graph(const MarketRealization& r, const Matching& m) {
  TypeAdjacencyGraph g;
  g.K = r.config.K;
  g.Q = r.config.Q;
  const int V = g.vertices();
  std::vector<std::vector<int>> adj(V);
  for (int k = 0; k < g.K; ++k)
    for (int q = 0; q < g.Q; ++q)
      if (m.pair_counts(k, q) > 0) {
        g.edges.emplace_back(k, q);
        adj[k].push_back(g.K + q);
        adj[g.K + q].push_back(k);
      }
  g.marked.assign(V, 0);
  for (int i : m.unmatched_workers) g.marked[r.worker_type[i]] = 1;
  for (int j : m.unmatched_employers) g.marked[g.K + r.employer_type[j]] = 1;

  g.distance.assign(V, kUnreachable);
  std::deque<int> queue;
  for (int v = 0; v < V; ++v)
    if (g.marked[v]) {
      g.distance[v] = 0;
      queue.push_back(v);
    }
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    for (int w : adj[v])
      if (g.distance[w] == kUnreachable) {
        g.distance[w] = g.distance[v] + 1;
        queue.push_back(w);
      }
  }

  g.component.assign(V, -1);
  for (int s = 0; s < V; ++s) {
    if (g.component[s] >= 0) continue;
    const int id = g.component_count++;
    bool has_mark = false;
    std::vector<int> stack{s};
    g.component[s] = id;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      has_mark = has_mark || g.marked[v];
      for (int w : adj[v])
        if (g.component[w] < 0) {
          g.component[w] = id;
          stack.push_back(w);
        }
    }
    if (!has_mark) ++g.unmarked_components;
  }
  return g;
}

// Empirical check of the per-type width bounds that drive the upper-bound
// argument. For each type t with at least two agents:
//   F1(t): t has matched and unmatched agents. Under F1 & B1 & B2,
//          max_{t' ~ t} width(t, t') <= max(f1 + delta, f2 / delta^{D-1}).
//   F2(t): every agent of t is matched. Under F2 & B1, for every neighbour t*,
//          max_{t' ~ t} width(t, t') <= width(t, t*) + 2 f1 + 2 delta.
struct TypeAudit {
  bool worker_side = true;
  int type = 0;
  int dim = 0;
  int agents = 0;
  bool F1 = false, F2 = false, all_unmatched = false;
  geometry::EventIndicators events;
  bool beta_event = false;  // every beta_{t,t'} >= delta at the midpoint prices
  double max_width = 0.0;
  bool lemma3_applies = false;
  double lemma3_bound = 0.0;
  bool lemma4_applies = false;
  double lemma4_bound = 0.0;
  bool violated = false;
  bool skipped = false;  // fewer than two agents, or nothing matched
};

struct LemmaAudit {
  double delta = 0.0;
  std::vector<TypeAudit> types;
  int violations = 0;
  int lemma3_checks = 0;
  int lemma4_checks = 0;
};

inline LemmaAudit audit_upper_bound_lemmas(const MarketRealization& r, const Matching& m,
                                           const CoreBounds& b, double delta) {
  if (!(delta > 0.0 && delta <= 0.5)) throw UsageError("audit delta must lie in (0, 1/2]");
  LemmaAudit audit;
  audit.delta = delta;
  const int K = r.config.K, Q = r.config.Q;
  const auto mid = b.midpoint();
  std::vector<int> unmatched_w(K, 0), unmatched_e(Q, 0);
  for (int i : m.unmatched_workers) ++unmatched_w[r.worker_type[i]];
  for (int j : m.unmatched_employers) ++unmatched_e[r.employer_type[j]];

  for (int side = 0; side < 2; ++side) {
    const bool worker_side = side == 0;
    const int types = worker_side ? K : Q;
    for (int t = 0; t < types; ++t) {
      TypeAudit ta;
      ta.worker_side = worker_side;
      ta.type = t;
      ta.dim = worker_side ? Q : K;
      ta.agents = worker_side ? r.config.worker_counts[t] : r.config.employer_counts[t];
      const int unmatched = worker_side ? unmatched_w[t] : unmatched_e[t];
      ta.F1 = unmatched > 0 && unmatched < ta.agents;
      ta.F2 = unmatched == 0;
      ta.all_unmatched = unmatched == ta.agents;

      std::vector<int> incident;
      for (int v = 0; v < b.size(); ++v)
        if ((worker_side ? b.nodes[v].k : b.nodes[v].q) == t) incident.push_back(v);
      if (ta.agents < 2 || incident.empty()) {
        ta.skipped = true;
        audit.types.push_back(ta);
        continue;
      }

      const auto cloud = worker_side ? geometry::worker_type_cloud(r, t)
                                     : geometry::employer_type_cloud(r, t);
      const auto stats = geometry::region_statistics(cloud, delta);
      ta.events = geometry::event_indicators(stats, ta.agents, ta.dim, delta);

      ta.beta_event = true;
      for (int v : incident) {
        const double beta = worker_side ? mid[v] - r.config.u(b.nodes[v].k, b.nodes[v].q) : -mid[v];
        ta.beta_event = ta.beta_event && beta >= delta;
      }

      double min_width = std::numeric_limits<double>::infinity();
      for (int v : incident) {
        ta.max_width = std::max(ta.max_width, b.width(v));
        min_width = std::min(min_width, b.width(v));
      }
      const double f1 = geometry::f1(ta.agents, ta.dim);
      const double f2 = geometry::f2(ta.agents);
      if (ta.F1 && ta.events.B1 && ta.events.B2) {
        ta.lemma3_applies = true;
        ta.lemma3_bound = std::max(f1 + delta, f2 / std::pow(delta, ta.dim - 1));
        ++audit.lemma3_checks;
        if (ta.max_width > ta.lemma3_bound + kCoreTolerance) ta.violated = true;
      }
      if (ta.F2 && ta.events.B1) {
        ta.lemma4_applies = true;
        ta.lemma4_bound = min_width + 2.0 * f1 + 2.0 * delta;
        ++audit.lemma4_checks;
        if (ta.max_width > ta.lemma4_bound + kCoreTolerance) ta.violated = true;
      }
      if (ta.violated) ++audit.violations;
      audit.types.push_back(ta);
    }
  }
  return audit;
}

}  // namespace coregauge
