#pragma once

#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "coregauge/error.hpp"
#include "coregauge/matrix.hpp"
#include "coregauge/rng.hpp"

namespace coregauge {

enum class DistributionKind { kUniform01, kTruncatedBeta };

// Law of every idiosyncratic productivity. Both choices are atomless with
// support [0, 1].
struct Distribution {
  DistributionKind kind = DistributionKind::kUniform01;
  double a = 1.0;  // Beta shape parameters, unused for Uniform01
  double b = 1.0;

  static Distribution uniform01() { return {}; }
  static Distribution truncated_beta(double a, double b) {
    return {DistributionKind::kTruncatedBeta, a, b};
  }

  // Maps a uniform draw in [0, 1) to the distribution by inverse CDF.
  double quantile(double u) const {
    if (kind == DistributionKind::kUniform01) return u;
    return boost::math::ibeta_inv(a, b, u);
  }

  friend bool operator==(const Distribution&, const Distribution&) = default;
};

struct MarketConfig {
  int K = 1;  // worker types
  int Q = 1;  // employer types
  std::vector<int> worker_counts;
  std::vector<int> employer_counts;
  Matrix<double> u;  // K x Q deterministic type-pair utility
  Distribution distribution;
  std::uint64_t seed = 0;

  int n_workers() const {
    return std::accumulate(worker_counts.begin(), worker_counts.end(), 0);
  }
  int n_employers() const {
    return std::accumulate(employer_counts.begin(), employer_counts.end(), 0);
  }
  int n_agents() const { return n_workers() + n_employers(); }

  friend bool operator==(const MarketConfig&, const MarketConfig&) = default;
};

inline void validate(const MarketConfig& c) {
  if (c.K < 1 || c.Q < 1) throw ConfigError("K and Q must be at least 1");
  if (c.worker_counts.size() != static_cast<std::size_t>(c.K))
    throw ConfigError("worker_counts must have K entries");
  if (c.employer_counts.size() != static_cast<std::size_t>(c.Q))
    throw ConfigError("employer_counts must have Q entries");
  for (int n : c.worker_counts)
    if (n < 1) throw ConfigError("worker_counts entries must be positive");
  for (int n : c.employer_counts)
    if (n < 1) throw ConfigError("employer_counts entries must be positive");
  if (c.u.rows() != static_cast<std::size_t>(c.K) ||
      c.u.cols() != static_cast<std::size_t>(c.Q))
    throw ConfigError("u must be a K x Q matrix");
  for (double v : c.u.data())
    if (!std::isfinite(v)) throw ConfigError("u entries must be finite");
  if (c.distribution.kind == DistributionKind::kTruncatedBeta &&
      !(c.distribution.a > 0 && c.distribution.b > 0 &&
        std::isfinite(c.distribution.a) && std::isfinite(c.distribution.b)))
    throw ConfigError("beta shape parameters must be positive and finite");
}

// A sampled market. Workers and employers are numbered 0..n-1 on each side;
// type blocks are contiguous in index order.
struct MarketRealization {
  MarketConfig config;
  Matrix<double> epsilon;  // n_E x K: employer j's productivity w.r.t. worker type k
  Matrix<double> eta;      // n_L x Q: worker i's productivity w.r.t. employer type q
  std::vector<int> worker_type;
  std::vector<int> employer_type;

  int n_workers() const { return static_cast<int>(worker_type.size()); }
  int n_employers() const { return static_cast<int>(employer_type.size()); }

  // u(type(i), q) + eta_i^q: worker i's side of a match with a type-q employer.
  double eta_tilde(int i, int q) const {
    return config.u(worker_type[i], q) + eta(i, q);
  }
};

inline std::vector<int> contiguous_types(const std::vector<int>& counts) {
  std::vector<int> types;
  for (std::size_t t = 0; t < counts.size(); ++t)
    types.insert(types.end(), counts[t], static_cast<int>(t));
  return types;
}

inline MarketRealization sample_market(const MarketConfig& config) {
  validate(config);
  MarketRealization r;
  r.config = config;
  r.worker_type = contiguous_types(config.worker_counts);
  r.employer_type = contiguous_types(config.employer_counts);
  const auto nL = r.worker_type.size();
  const auto nE = r.employer_type.size();
  r.epsilon = Matrix<double>(nE, config.K);
  r.eta = Matrix<double>(nL, config.Q);
  for (std::size_t j = 0; j < nE; ++j)
    for (int k = 0; k < config.K; ++k)
      r.epsilon(j, k) = config.distribution.quantile(
          rng::uniform(config.seed, rng::Role::kEpsilon, j, k));
  for (std::size_t i = 0; i < nL; ++i)
    for (int q = 0; q < config.Q; ++q)
      r.eta(i, q) = config.distribution.quantile(
          rng::uniform(config.seed, rng::Role::kEta, i, q));
  return r;
}

// Value of matching worker i with employer j:
//   u(type(i), type(j)) + epsilon_j^{type(i)} + eta_i^{type(j)}.
inline double match_value(const MarketRealization& r, int i, int j) {
  if (i < 0 || i >= r.n_workers()) throw UsageError("worker index out of range");
  if (j < 0 || j >= r.n_employers()) throw UsageError("employer index out of range");
  const int k = r.worker_type[i];
  const int q = r.employer_type[j];
  return r.config.u(k, q) + r.epsilon(j, k) + r.eta(i, q);
}

struct BalancedSubmarketCheck {
  bool holds = true;  // true iff no balanced submarket exists
  std::vector<int> worker_types;    // witness when !holds (0-based)
  std::vector<int> employer_types;
};

// No pair of nonempty type subsets S (workers), S' (employers) with equal
// agent counts. Exhaustive over subsets, so K + Q is capped.
inline BalancedSubmarketCheck check_assumption_no_balanced_submarket(
    const MarketConfig& c) {
  validate(c);
  if (c.K + c.Q > 24)
    throw CapabilityError("subset enumeration limited to K + Q <= 24");
  std::map<long long, unsigned> first_worker_mask;
  for (unsigned mask = 1; mask < (1u << c.K); ++mask) {
    long long sum = 0;
    for (int t = 0; t < c.K; ++t)
      if (mask & (1u << t)) sum += c.worker_counts[t];
    first_worker_mask.try_emplace(sum, mask);
  }
  for (unsigned mask = 1; mask < (1u << c.Q); ++mask) {
    long long sum = 0;
    for (int t = 0; t < c.Q; ++t)
      if (mask & (1u << t)) sum += c.employer_counts[t];
    auto it = first_worker_mask.find(sum);
    if (it == first_worker_mask.end()) continue;
    BalancedSubmarketCheck out;
    out.holds = false;
    for (int t = 0; t < c.K; ++t)
      if (it->second & (1u << t)) out.worker_types.push_back(t);
    for (int t = 0; t < c.Q; ++t)
      if (mask & (1u << t)) out.employer_types.push_back(t);
    return out;
  }
  return {};
}

// Every type holds at least a C fraction of all agents.
inline bool check_assumption_linear_growth(const MarketConfig& c, double C) {
  if (!(C > 0.0 && C < 1.0)) throw UsageError("linear growth constant must lie in (0, 1)");
  validate(c);
  const double bound = C * c.n_agents();
  for (int n : c.worker_counts)
    if (n < bound) return false;
  for (int n : c.employer_counts)
    if (n < bound) return false;
  return true;
}

}  // namespace coregauge
