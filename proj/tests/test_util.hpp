#pragma once

// Shared test oracles. Everything here is an independent route to the values
// being checked: brute-force enumeration, dense linear algebra, or direct
// formula evaluation kept separate from the implementation under test.

#include <algorithm>
#include <cmath>
#include <vector>

#include "core/common.hpp"
#include "core/tag.hpp"

namespace testutil {

// Dense solve of (I - (1-restart) P^T) p = restart * e_center for the PPR
// stationary distribution, as an oracle for power iteration.
inline std::vector<double> ppr_dense_oracle(const s2align::tag::Subgraph& sg,
                                            double restart) {
  const std::size_t n = sg.size();
  std::vector<std::vector<int>> adj(n);
  for (const auto& [u, v] : sg.local_edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  // Row-stochastic transition; dangling rows teleport to the center.
  std::vector<double> p_mat(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (adj[i].empty()) {
      p_mat[i * n + 0] = 1.0;
    } else {
      for (int j : adj[i]) p_mat[i * n + j] = 1.0 / adj[i].size();
    }
  }
  // A = I - (1-restart) P^T, b = restart * e_0; Gaussian elimination.
  std::vector<double> a(n * n, 0.0), b(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a[i * n + j] = (i == j ? 1.0 : 0.0) - (1.0 - restart) * p_mat[j * n + i];
    }
  }
  b[0] = restart;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r * n + col]) > std::fabs(a[pivot * n + col])) pivot = r;
    }
    for (std::size_t j = 0; j < n; ++j) std::swap(a[col * n + j], a[pivot * n + j]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      for (std::size_t j = col; j < n; ++j) a[r * n + j] -= f * a[col * n + j];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= a[i * n + j] * x[j];
    x[i] = acc / a[i * n + i];
  }
  return x;
}

// Direct (no logsumexp) evaluation of the symmetric contrastive loss for
// sample i over unit-norm embeddings, as written in the base formulation.
inline double symmetric_contrastive_oracle(
    const std::vector<std::vector<double>>& z_g,
    const std::vector<std::vector<double>>& z_t, double tau, std::size_t i) {
  const std::size_t batch = z_g.size();
  auto sim = [](const std::vector<double>& a, const std::vector<double>& b) {
    const double na = std::max(s2align::norm_values(a), 1e-12);
    const double nb = std::max(s2align::norm_values(b), 1e-12);
    return s2align::dot_values(a, b) / (na * nb);
  };
  double denom_g2t = 0.0, denom_t2g = 0.0;
  for (std::size_t j = 0; j < batch; ++j) {
    denom_g2t += std::exp(sim(z_g[i], z_t[j]) / tau);
    denom_t2g += std::exp(sim(z_g[j], z_t[i]) / tau);
  }
  const double pos = std::exp(sim(z_g[i], z_t[i]) / tau);
  return 0.5 * (-std::log(pos / denom_g2t) - std::log(pos / denom_t2g));
}

// Brute-force AUC by pair enumeration, ties counted 1/2.
inline double auc_bruteforce(const std::vector<double>& pos,
                             const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos) {
    for (double q : neg) {
      if (p > q) wins += 1.0;
      else if (p == q) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// Brute-force retrieval ranks (descending cosine, ties by candidate index).
inline std::vector<std::size_t> retrieval_ranks_bruteforce(
    const std::vector<std::vector<double>>& queries,
    const std::vector<std::vector<double>>& candidates) {
  auto sim = [](const std::vector<double>& a, const std::vector<double>& b) {
    const double na = std::max(s2align::norm_values(a), 1e-12);
    const double nb = std::max(s2align::norm_values(b), 1e-12);
    return s2align::dot_values(a, b) / (na * nb);
  };
  const std::size_t n = queries.size();
  std::vector<std::size_t> ranks(n);
  for (std::size_t q = 0; q < n; ++q) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t c = 0; c < n; ++c) scored.push_back({sim(queries[q], candidates[c]), c});
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) {
                       if (a.first != b.first) return a.first > b.first;
                       return a.second < b.second;
                     });
    for (std::size_t r = 0; r < n; ++r) {
      if (scored[r].second == q) {
        ranks[q] = r + 1;
        break;
      }
    }
  }
  return ranks;
}

// Composite Simpson quadrature on [lo, hi].
template <class Fn>
double simpson(Fn&& fn, double lo, double hi, int intervals) {
  if (intervals % 2) ++intervals;
  const double h = (hi - lo) / intervals;
  double acc = fn(lo) + fn(hi);
  for (int i = 1; i < intervals; ++i) {
    acc += fn(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  }
  return acc * h / 3.0;
}

inline std::vector<double> random_unit_vector(s2align::Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double nrm = 0.0;
  do {
    nrm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      nrm += x * x;
    }
  } while (nrm < 1e-12);
  nrm = std::sqrt(nrm);
  for (auto& x : v) x /= nrm;
  return v;
}

}  // namespace testutil
