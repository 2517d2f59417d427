#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "coregauge/error.hpp"
#include "coregauge/market.hpp"
#include "coregauge/matrix.hpp"
#include "coregauge/rng.hpp"

// Order statistics of one agent type's productivity vectors, viewed as a point
// cloud in the unit hypercube. The gap statistics bound how far type-pair
// prices can move before some agent's best response changes.
namespace coregauge::geometry {

struct PointCloud {
  int dim = 1;
  std::vector<double> coords;  // row-major, size() * dim entries

  std::size_t size() const { return dim > 0 ? coords.size() / dim : 0; }
  std::span<const double> point(std::size_t i) const {
    return {coords.data() + i * dim, static_cast<std::size_t>(dim)};
  }
  void add(std::span<const double> x) { coords.insert(coords.end(), x.begin(), x.end()); }
};

// Region membership. Boundary points are included.

// x^k is a largest coordinate.
inline bool in_dominant_region(std::span<const double> x, int k) {
  for (std::size_t c = 0; c < x.size(); ++c)
    if (x[k] < x[c]) return false;
  return true;
}

// x^{k1} dominates every coordinate except k2, and x^{k1} >= delta.
inline bool in_pair_region(std::span<const double> x, int k1, int k2, double delta) {
  if (x[k1] < delta) return false;
  for (std::size_t c = 0; c < x.size(); ++c)
    if (static_cast<int>(c) != k2 && x[k1] < x[c]) return false;
  return true;
}

// Every coordinate other than k is at most delta.
inline bool in_slab(std::span<const double> x, int k, double delta) {
  for (std::size_t c = 0; c < x.size(); ++c)
    if (static_cast<int>(c) != k && x[c] > delta) return false;
  return true;
}

// x^{k1} >= x^{k2} - delta and x^{k1} dominates every other coordinate.
inline bool in_relaxed_pair_region(std::span<const double> x, int k1, int k2, double delta) {
  if (x[k1] < x[k2] - delta) return false;
  for (std::size_t c = 0; c < x.size(); ++c)
    if (static_cast<int>(c) != k2 && x[k1] < x[c]) return false;
  return true;
}

// Largest difference between consecutive values of `values` plus the two
// sentinels. Consumes `values`.
inline double max_gap(std::vector<double> values, double lo, double hi) {
  values.push_back(lo);
  values.push_back(hi);
  std::sort(values.begin(), values.end());
  double gap = 0.0;
  for (std::size_t t = 1; t < values.size(); ++t) gap = std::max(gap, values[t] - values[t - 1]);
  return gap;
}

struct RegionStats {
  double delta = 0.0;
  int dim = 1;
  std::vector<double> V;       // per k: gap of dominant-region coordinates
  Matrix<double> Vpair;        // ordered (k1, k2), NaN on the diagonal
  std::vector<double> Vtilde;  // per k: gap inside the delta-slab
  Matrix<long long> npair;     // ordered (k1, k2), points in the relaxed region; -1 on diagonal
  std::size_t points = 0;
};

inline RegionStats region_statistics(const PointCloud& cloud, double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) throw UsageError("delta must lie in [0, 1]");
  if (cloud.dim < 1) throw UsageError("cloud dimension must be positive");
  const int D = cloud.dim;
  const std::size_t n = cloud.size();
  RegionStats s;
  s.delta = delta;
  s.dim = D;
  s.points = n;
  s.V.assign(D, 0.0);
  s.Vtilde.assign(D, 0.0);
  s.Vpair = Matrix<double>(D, D, std::numeric_limits<double>::quiet_NaN());
  s.npair = Matrix<long long>(D, D, -1);

  std::vector<double> vals;
  vals.reserve(n);
  for (int k = 0; k < D; ++k) {
    vals.clear();
    for (std::size_t i = 0; i < n; ++i) {
      auto x = cloud.point(i);
      if (in_dominant_region(x, k)) vals.push_back(x[k]);
    }
    s.V[k] = max_gap(vals, 0.0, 1.0);

    vals.clear();
    for (std::size_t i = 0; i < n; ++i) {
      auto x = cloud.point(i);
      if (in_slab(x, k, delta)) vals.push_back(x[k]);
    }
    s.Vtilde[k] = max_gap(vals, 0.0, 1.0);
  }
  for (int k1 = 0; k1 < D; ++k1) {
    for (int k2 = 0; k2 < D; ++k2) {
      if (k1 == k2) continue;
      vals.clear();
      long long count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        auto x = cloud.point(i);
        if (in_pair_region(x, k1, k2, delta)) vals.push_back(x[k1] - x[k2]);
        if (in_relaxed_pair_region(x, k1, k2, delta)) ++count;
      }
      s.Vpair(k1, k2) = max_gap(vals, -1.0 + delta, 1.0);
      s.npair(k1, k2) = count;
    }
  }
  return s;
}

// Gap threshold for the dominant-region statistics:
//   3 (6 D (D-1) ln n / n)^{1/D}  for D >= 2,   3 * 12 ln n / n  for D = 1.
inline double f1(double n, int D) {
  const double ln = std::log(n);
  if (D == 1) return 3.0 * 12.0 * ln / n;
  return 3.0 * std::pow(6.0 * D * (D - 1) * ln / n, 1.0 / D);
}

// Gap threshold for the slab statistics (before the delta^{D-1} scaling).
inline double f2(double n) { return 6.0 * std::log(n) / n; }

struct EventIndicators {
  bool B1 = false;
  bool B2 = false;
  bool B3 = false;
};

inline EventIndicators event_indicators(const RegionStats& s, long long n_t, int D,
                                        double delta) {
  if (n_t < 2) throw UsageError("event thresholds need at least two points");
  if (D != s.dim) throw UsageError("dimension does not match the statistics");
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (double v : s.V) worst_gap = std::max(worst_gap, v);
  bool all_pairs_large = true;
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b) {
      if (a == b) continue;
      worst_gap = std::max(worst_gap, s.Vpair(a, b));
      if (static_cast<double>(s.npair(a, b)) < 1.0 + static_cast<double>(n_t) / D)
        all_pairs_large = false;
    }
  double worst_slab = -std::numeric_limits<double>::infinity();
  for (double v : s.Vtilde) worst_slab = std::max(worst_slab, v);

  EventIndicators ev;
  ev.B1 = worst_gap <= f1(static_cast<double>(n_t), D);
  ev.B2 = worst_slab <= f2(static_cast<double>(n_t)) / std::pow(delta, D - 1);
  ev.B3 = all_pairs_large;
  return ev;
}

// Productivity vectors of one agent type. Employer types live in [0,1]^K
// (one coordinate per worker type), worker types in [0,1]^Q.
inline PointCloud employer_type_cloud(const MarketRealization& r, int q) {
  PointCloud c{r.config.K, {}};
  for (int j = 0; j < r.n_employers(); ++j)
    if (r.employer_type[j] == q) c.add(r.epsilon.row(j));
  return c;
}

inline PointCloud worker_type_cloud(const MarketRealization& r, int k) {
  PointCloud c{r.config.Q, {}};
  for (int i = 0; i < r.n_workers(); ++i)
    if (r.worker_type[i] == k) c.add(r.eta.row(i));
  return c;
}

// n i.i.d. uniform points in [0,1]^D, a pure function of the seed.
inline PointCloud uniform_cloud(std::size_t n, int D, std::uint64_t seed) {
  PointCloud c{D, std::vector<double>(n * D)};
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < D; ++d) c.coords[i * D + d] = rng::uniform(seed, rng::Role::kCloud, i, d);
  return c;
}

inline std::string region_stats_csv_header(int D) {
  std::ostringstream os;
  os << "delta,points";
  for (int k = 0; k < D; ++k) os << ",V_" << k;
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b)
      if (a != b) os << ",Vpair_" << a << '_' << b;
  for (int k = 0; k < D; ++k) os << ",Vtilde_" << k;
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b)
      if (a != b) os << ",npair_" << a << '_' << b;
  return os.str();
}

inline std::string region_stats_csv_row(const RegionStats& s) {
  std::ostringstream os;
  os.precision(17);
  os << s.delta << ',' << s.points;
  for (double v : s.V) os << ',' << v;
  for (int a = 0; a < s.dim; ++a)
    for (int b = 0; b < s.dim; ++b)
      if (a != b) os << ',' << s.Vpair(a, b);
  for (double v : s.Vtilde) os << ',' << v;
  for (int a = 0; a < s.dim; ++a)
    for (int b = 0; b < s.dim; ++b)
      if (a != b) os << ',' << s.npair(a, b);
  return os.str();
}

}  // namespace coregauge::geometry
