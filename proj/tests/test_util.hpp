#pragma once

#include <cstdint>
#include <vector>

#include "coregauge/market.hpp"

namespace coregauge::testkit {

// A realization with hand-picked productivities. `eps` is n_E x K and `eta`
// is n_L x Q, both row-major.
inline MarketRealization handmade(int K, int Q, std::vector<int> worker_counts,
                                  std::vector<int> employer_counts, std::vector<double> u,
                                  std::vector<double> eps, std::vector<double> eta) {
  MarketRealization r;
  r.config.K = K;
  r.config.Q = Q;
  r.config.worker_counts = std::move(worker_counts);
  r.config.employer_counts = std::move(employer_counts);
  r.config.u = Matrix<double>(K, Q);
  for (int k = 0; k < K; ++k)
    for (int q = 0; q < Q; ++q) r.config.u(k, q) = u.at(k * Q + q);
  validate(r.config);
  r.worker_type = contiguous_types(r.config.worker_counts);
  r.employer_type = contiguous_types(r.config.employer_counts);
  r.epsilon = Matrix<double>(r.employer_type.size(), K);
  r.eta = Matrix<double>(r.worker_type.size(), Q);
  for (std::size_t j = 0; j < r.employer_type.size(); ++j)
    for (int k = 0; k < K; ++k) r.epsilon(j, k) = eps.at(j * K + k);
  for (std::size_t i = 0; i < r.worker_type.size(); ++i)
    for (int q = 0; q < Q; ++q) r.eta(i, q) = eta.at(i * Q + q);
  return r;
}

// Small random market of the kind used by the oracle-equivalence suites:
// at most `max_side` agents per side, K, Q <= 3, u drawn from {-1, 0, 1, 3}.
inline MarketConfig small_random_config(std::uint64_t seed, int max_side = 6) {
  auto pick = [&](std::uint64_t salt, int lo, int hi) {
    return lo + static_cast<int>(rng::derive_seed(seed, rng::Role::kTrial, salt, 99) %
                                 static_cast<std::uint64_t>(hi - lo + 1));
  };
  MarketConfig c;
  c.K = pick(1, 1, 3);
  c.Q = pick(2, 1, 3);
  const int nL = pick(3, c.K, std::max(c.K, max_side));
  const int nE = pick(4, c.Q, std::max(c.Q, max_side));
  c.worker_counts.assign(c.K, 1);
  c.employer_counts.assign(c.Q, 1);
  for (int extra = nL - c.K, t = 0; extra > 0; --extra, ++t) ++c.worker_counts[pick(10 + t, 0, c.K - 1)];
  for (int extra = nE - c.Q, t = 0; extra > 0; --extra, ++t) ++c.employer_counts[pick(30 + t, 0, c.Q - 1)];
  const double menu[] = {-1.0, 0.0, 1.0, 3.0};
  c.u = Matrix<double>(c.K, c.Q);
  for (int k = 0; k < c.K; ++k)
    for (int q = 0; q < c.Q; ++q) c.u(k, q) = menu[pick(50 + k * 3 + q, 0, 3)];
  c.seed = seed;
  return c;
}

}  // namespace coregauge::testkit
