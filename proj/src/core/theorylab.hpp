#pragma once

// Numerical verification of the weighted-risk-equalization theory on
// analytically constructed domains: exact Gaussian-mixture density ratios,
// Monte Carlo weighted risks, an equalization check with a built-in
// falsification case, and the constrained linear-regression experiment that
// drives spurious weights to zero.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace s2align::theory {

struct GaussianDiag {
  std::vector<double> mean;
  std::vector<double> var;

  double log_density(const std::vector<double>& x) const;
  void sample(Rng& rng, std::vector<double>& out) const;
};

struct SyntheticDomain {
  GaussianDiag z_law;  // invariant features, distinct marginal per domain
  GaussianDiag v_law;  // domain-private spurious features, label-independent
  double pi = 0.0;     // mixture weight
  double label_scale = 1.0;  // != 1 only in the conditional-invariance violation case
};

struct DomainFamily {
  std::vector<SyntheticDomain> domains;
  std::vector<double> w_star;  // shared label law y = label_scale * w*.z + noise
  double noise_var = 0.0;
  int d_inv = 0;
  int d_spu = 0;
};

DomainFamily build_synthetic_domains(int num_domains, int d_inv, int d_spu,
                                     std::uint64_t seed);
// Same construction, but the label law differs per domain, breaking the
// conditional-invariance hypothesis.
DomainFamily build_violating_domains(int num_domains, int d_inv, int d_spu,
                                     std::uint64_t seed);

// log p_0(z) = log sum_e pi_e p_e(z), exact.
double exact_log_global_density(const DomainFamily& family,
                                const std::vector<double>& z);
// r_e(z) = p_0(z) / p_e(z), exact, computed in log space.
double exact_density_ratio(const DomainFamily& family, int e,
                           const std::vector<double>& z);

using Predictor = std::function<double(const std::vector<double>& z)>;
using Reliability = std::function<double(const std::vector<double>& z)>;

struct McRisk {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

// Monte Carlo estimate of E_{P_e}[r_e(z) rho(z) (f(z) - y)^2]; set weighted
// to false for the plain (r == 1) risk. Chunked draws with derived seeds and
// ordered summation.
McRisk weighted_risk_mc(const DomainFamily& family, int e,
                        const Predictor& predictor, const Reliability& rho,
                        std::size_t n_samples, std::uint64_t seed,
                        bool weighted = true);

struct EqualizationReport {
  std::vector<double> weighted_risks;
  std::vector<double> unweighted_risks;
  double weighted_gap = 0.0;    // max pairwise |R_e - R_e'| / max(R_bar, 1e-8)
  double unweighted_gap = 0.0;
  std::size_t n_samples = 0;
  double tol_rel = 0.0;
  bool weighted_equal = false;
  bool unweighted_differ = false;
  bool pass = false;  // == weighted_equal
};

EqualizationReport verify_equalization(const DomainFamily& family,
                                       const Predictor& predictor,
                                       const Reliability& rho,
                                       std::size_t n_samples, double tol_rel,
                                       std::uint64_t seed);

struct SpuriousReport {
  bool sufficient_domains = false;
  std::string note;
  std::vector<double> w_constrained;  // [w_inv, w_spu]
  std::vector<double> w_ols;
  double w_spu_norm = 0.0;
  double ols_w_spu_norm = 0.0;
  double w_inv_err = 0.0;  // ||w_inv - w*||
  double w_star_norm = 0.0;
  bool pass = false;  // ||w_spu|| <= 0.05 ||w*||, only claimed when sufficient_domains
};

// Linear regression with domain-varying spurious correlations; minimizes the
// mean density-ratio-weighted risk under pairwise risk-equality penalties
// (continuation 1e1 -> 1e2 -> 1e3) and compares against the pooled OLS
// baseline. Set independent_spurious to decouple the spurious features from
// the label in every domain.
SpuriousReport verify_spurious_elimination(int num_domains, int d_spu,
                                           std::uint64_t seed,
                                           bool independent_spurious = false);

// Test-support oracle: solves A x = b by Gaussian elimination with partial
// pivoting (small dense systems only).
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b);

}  // namespace s2align::theory
