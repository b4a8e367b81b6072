#pragma once

// Sparse-aware cross-domain risk balancing: diagonal-Gaussian density models
// over the detached structural key, density-ratio and reliability weights,
// per-domain weighted risks, and the risk-variance penalty.

#include <vector>

#include "core/autodiff.hpp"
#include "core/tag.hpp"

namespace s2align::scrb {

struct ScrbConfig {
  double gamma = 0.5;
  double epsilon = 1e-8;
  double lambda_d = 0.5;
  double lambda_a = 0.5;
  double lambda_c = 0.5;
};

// Diagonal Gaussian log density with parameters (mean, log variance).
ad::Var log_density(ad::Tape& tape, const ad::Var& mean, const ad::Var& log_var,
                    const std::vector<double>& z);
double log_density_value(const std::vector<double>& mean,
                         const std::vector<double>& log_var,
                         const std::vector<double>& z);

// L_den = -(1/B) sum_i [log p_0(z_i) + log p_{e(i)}(z_i)] over detached keys.
// Gradients reach the density parameters only.
ad::Var density_loss(ad::Tape& tape, const ad::BoundParams& params,
                     const std::vector<std::vector<double>>& keys,
                     const std::vector<int>& domain_ids);

// r = (p_0(z) / (p_e(z) + epsilon))^gamma, evaluated in log space on current
// (detached) parameter values; strictly positive.
double density_ratio(const std::vector<double>& mean0,
                     const std::vector<double>& logvar0,
                     const std::vector<double>& mean_e,
                     const std::vector<double>& logvar_e,
                     const std::vector<double>& z, double gamma,
                     double epsilon);

// d = exp((1/ln N) sum_j p_j ln p_j) with 0 ln 0 = 0; d = 1 for N <= 1.
double structural_stability(const std::vector<double>& ppr, std::size_t n);

double text_coverage(const tag::SparseTag& tag, const tag::Subgraph& sg);

// c = (1 + cos(z_g_c, z_t_c)) / 2 on detached values.
double consistency_score(const std::vector<double>& z_g_c,
                         const std::vector<double>& z_t_c);

double reliability(double d, double a, double c, const ScrbConfig& cfg);

struct WeightResult {
  std::vector<double> weights;
  bool fallback_used = false;  // a domain had sum(r*rho) == 0; uniform weights there
};

// omega_i = |T_e| r_i rho_i / sum_{j in T_e} r_j rho_j; per-domain sums equal
// the domain batch counts exactly.
WeightResult sample_weights(const std::vector<double>& r,
                            const std::vector<double>& rho,
                            const std::vector<int>& domain_ids);

struct DomainRisks {
  std::vector<int> domains;     // sorted, domains present in the batch
  std::vector<ad::Var> risks;   // R_e, same order
  ad::Var mean_risk;            // R_bar over present domains
};

DomainRisks domain_risks(const std::vector<ad::Var>& losses,
                         const std::vector<double>& weights,
                         const std::vector<int>& domain_ids);

// L_risk = (1/K) sum_e (R_e - R_bar)^2 over domains present in the batch.
ad::Var risk_balance_loss(const DomainRisks& risks);

// L_total = L_align + alpha L_rec + mu L_risk + nu L_den.
ad::Var total_loss(const ad::Var& align, const ad::Var& rec,
                   const ad::Var& risk, const ad::Var& den, double alpha,
                   double mu, double nu);

}  // namespace s2align::scrb
