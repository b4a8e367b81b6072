#include "core/theorylab.hpp"

#include <algorithm>
#include <cmath>

namespace s2align::theory {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double GaussianDiag::log_density(const std::vector<double>& x) const {
  if (x.size() != mean.size()) raise(ErrorCode::shape, "GaussianDiag: dim mismatch");
  double quad = 0.0, logdet = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - mean[k];
    quad += diff * diff / var[k];
    logdet += std::log(var[k]);
  }
  return -0.5 * (quad + logdet + static_cast<double>(x.size()) * kLog2Pi);
}

void GaussianDiag::sample(Rng& rng, std::vector<double>& out) const {
  out.resize(mean.size());
  for (std::size_t k = 0; k < mean.size(); ++k) {
    out[k] = mean[k] + std::sqrt(var[k]) * rng.normal();
  }
}

namespace {

DomainFamily build_family(int num_domains, int d_inv, int d_spu,
                          std::uint64_t seed, bool violate_invariance) {
  if (num_domains < 2) raise(ErrorCode::invalid_argument, "need >= 2 domains");
  if (d_inv < 1 || d_spu < 1) raise(ErrorCode::invalid_argument, "dims must be >= 1");

  DomainFamily family;
  family.d_inv = d_inv;
  family.d_spu = d_spu;
  family.noise_var = 0.09;

  Rng rng(derive_seed(seed, "theory_domains"));
  family.w_star.resize(d_inv);
  for (auto& w : family.w_star) w = rng.uniform(0.6, 1.4);

  for (int e = 0; e < num_domains; ++e) {
    SyntheticDomain dom;
    dom.pi = 1.0 / num_domains;
    dom.z_law.mean.resize(d_inv);
    dom.z_law.var.resize(d_inv);
    for (int k = 0; k < d_inv; ++k) {
      // Distinct means; variances stay in a narrow band so the ratio-weighted
      // second moments remain small enough for 2e5-sample estimates.
      dom.z_law.mean[k] = (e - (num_domains - 1) / 2.0) * 0.6 +
                          0.05 * rng.uniform(-1.0, 1.0);
      dom.z_law.var[k] = 1.0 + 0.05 * e + 0.02 * rng.uniform();
    }
    dom.v_law.mean.assign(d_spu, 0.5 * e);
    dom.v_law.var.assign(d_spu, 1.0 + 0.3 * e);
    dom.label_scale = violate_invariance ? 1.0 + 0.45 * e : 1.0;
    family.domains.push_back(std::move(dom));
  }
  return family;
}

}  // namespace

DomainFamily build_synthetic_domains(int num_domains, int d_inv, int d_spu,
                                     std::uint64_t seed) {
  return build_family(num_domains, d_inv, d_spu, seed, false);
}

DomainFamily build_violating_domains(int num_domains, int d_inv, int d_spu,
                                     std::uint64_t seed) {
  return build_family(num_domains, d_inv, d_spu, seed, true);
}

double exact_log_global_density(const DomainFamily& family,
                                const std::vector<double>& z) {
  double acc = -std::numeric_limits<double>::infinity();
  for (const auto& dom : family.domains) {
    acc = logaddexp(acc, std::log(dom.pi) + dom.z_law.log_density(z));
  }
  return acc;
}

double exact_density_ratio(const DomainFamily& family, int e,
                           const std::vector<double>& z) {
  if (e < 0 || e >= static_cast<int>(family.domains.size())) {
    raise(ErrorCode::unknown_domain, "exact_density_ratio: bad domain index");
  }
  const double log_r =
      exact_log_global_density(family, z) - family.domains[e].z_law.log_density(z);
  return std::exp(log_r);
}

McRisk weighted_risk_mc(const DomainFamily& family, int e,
                        const Predictor& predictor, const Reliability& rho,
                        std::size_t n_samples, std::uint64_t seed,
                        bool weighted) {
  if (e < 0 || e >= static_cast<int>(family.domains.size())) {
    raise(ErrorCode::unknown_domain, "weighted_risk_mc: bad domain index");
  }
  const SyntheticDomain& dom = family.domains[e];
  const std::size_t chunk = 8192;
  const std::size_t num_chunks = (n_samples + chunk - 1) / chunk;
  std::vector<double> sums(num_chunks, 0.0), sq_sums(num_chunks, 0.0);

  parallel_for(num_chunks, [&](std::size_t c) {
    Rng rng(derive_seed(seed, "risk_mc", static_cast<std::uint64_t>(e), c));
    const std::size_t lo = c * chunk;
    const std::size_t hi = std::min(n_samples, lo + chunk);
    std::vector<double> z;
    double s = 0.0, s2 = 0.0;
    const double noise_sd = std::sqrt(family.noise_var);
    for (std::size_t i = lo; i < hi; ++i) {
      dom.z_law.sample(rng, z);
      double y = noise_sd * rng.normal();
      for (int k = 0; k < family.d_inv; ++k) {
        y += dom.label_scale * family.w_star[k] * z[k];
      }
      const double err = predictor(z) - y;
      const double w = weighted ? exact_density_ratio(family, e, z) : 1.0;
      const double term = w * rho(z) * err * err;
      s += term;
      s2 += term * term;
    }
    sums[c] = s;
    sq_sums[c] = s2;
  });

  double total = 0.0, total_sq = 0.0;
  for (std::size_t c = 0; c < num_chunks; ++c) {
    total += sums[c];
    total_sq += sq_sums[c];
  }
  McRisk out;
  out.n = n_samples;
  const double n = static_cast<double>(n_samples);
  out.mean = total / n;
  const double variance = std::max(0.0, total_sq / n - out.mean * out.mean);
  out.std_error = std::sqrt(variance / n);
  return out;
}

namespace {

double max_relative_gap(const std::vector<double>& risks) {
  double lo = risks[0], hi = risks[0], mean = 0.0;
  for (double r : risks) {
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    mean += r;
  }
  mean /= static_cast<double>(risks.size());
  return (hi - lo) / std::max(mean, 1e-8);
}

}  // namespace

EqualizationReport verify_equalization(const DomainFamily& family,
                                       const Predictor& predictor,
                                       const Reliability& rho,
                                       std::size_t n_samples, double tol_rel,
                                       std::uint64_t seed) {
  EqualizationReport report;
  report.n_samples = n_samples;
  report.tol_rel = tol_rel;
  const int num_domains = static_cast<int>(family.domains.size());
  for (int e = 0; e < num_domains; ++e) {
    report.weighted_risks.push_back(
        weighted_risk_mc(family, e, predictor, rho, n_samples, seed, true).mean);
    report.unweighted_risks.push_back(
        weighted_risk_mc(family, e, predictor, rho, n_samples, seed, false).mean);
  }
  report.weighted_gap = max_relative_gap(report.weighted_risks);
  report.unweighted_gap = max_relative_gap(report.unweighted_risks);
  report.weighted_equal = report.weighted_gap <= tol_rel;
  report.unweighted_differ = report.unweighted_gap > tol_rel;
  report.pass = report.weighted_equal;
  return report;
}

std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  if (a.size() != n * n) raise(ErrorCode::shape, "solve_dense: bad dimensions");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r * n + col]) > std::fabs(a[pivot * n + col])) pivot = r;
    }
    if (std::fabs(a[pivot * n + col]) < 1e-12) {
      raise(ErrorCode::non_convergence, "solve_dense: singular matrix");
    }
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[col * n + j], a[pivot * n + j]);
      std::swap(b[col], b[pivot]);
    }
    const double diag = a[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / diag;
      if (f == 0.0) continue;
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

SpuriousReport verify_spurious_elimination(int num_domains, int d_spu,
                                           std::uint64_t seed,
                                           bool independent_spurious) {
  SpuriousReport report;
  if (num_domains <= d_spu) {
    report.sufficient_domains = false;
    report.note = "insufficient domains: need more domains than spurious dims";
    return report;
  }
  report.sufficient_domains = true;

  const int d_inv = 2;
  const int dim = d_inv + d_spu;
  DomainFamily family = build_synthetic_domains(num_domains, d_inv, d_spu, seed);
  // Label noise large enough that the spurious channel carries real signal
  // for the OLS baseline to latch onto.
  family.noise_var = 1.0;
  report.w_star_norm = norm_values(family.w_star);

  // Spurious coupling V_k = gamma_{e,k} * y + eta; asymmetric across domains
  // so the pooled OLS cannot cancel it.
  std::vector<std::vector<double>> coupling(num_domains,
                                            std::vector<double>(d_spu));
  const double base_gammas[] = {0.9, -0.4, 0.6, -0.7, 0.5, 0.8};
  for (int e = 0; e < num_domains; ++e) {
    for (int k = 0; k < d_spu; ++k) {
      coupling[e][k] =
          independent_spurious ? 0.0 : base_gammas[(e + 3 * k) % 6];
    }
  }
  const double eta_sd = 0.4;

  // Weighted and unweighted sample moments per domain:
  //   R_e(w) = w' A_e w - 2 b_e' w + c_e.
  const std::size_t n_per_domain = 20000;
  std::vector<std::vector<double>> a_w(num_domains, std::vector<double>(dim * dim, 0.0));
  std::vector<std::vector<double>> b_w(num_domains, std::vector<double>(dim, 0.0));
  std::vector<double> c_w(num_domains, 0.0);
  std::vector<std::vector<double>> a_u = a_w;
  std::vector<std::vector<double>> b_u = b_w;

  for (int e = 0; e < num_domains; ++e) {
    Rng rng(derive_seed(seed, "spurious_draws", static_cast<std::uint64_t>(e)));
    std::vector<double> z, x(dim);
    const double noise_sd = std::sqrt(family.noise_var);
    for (std::size_t i = 0; i < n_per_domain; ++i) {
      family.domains[e].z_law.sample(rng, z);
      double y = noise_sd * rng.normal();
      for (int k = 0; k < d_inv; ++k) y += family.w_star[k] * z[k];
      for (int k = 0; k < d_inv; ++k) x[k] = z[k];
      for (int k = 0; k < d_spu; ++k) {
        x[d_inv + k] = coupling[e][k] * y + eta_sd * rng.normal();
      }
      const double r = exact_density_ratio(family, e, z);
      for (int p = 0; p < dim; ++p) {
        for (int q = 0; q < dim; ++q) {
          a_w[e][p * dim + q] += r * x[p] * x[q];
          a_u[e][p * dim + q] += x[p] * x[q];
        }
        b_w[e][p] += r * x[p] * y;
        b_u[e][p] += x[p] * y;
      }
      c_w[e] += r * y * y;
    }
    const double inv_n = 1.0 / static_cast<double>(n_per_domain);
    for (auto& v : a_w[e]) v *= inv_n;
    for (auto& v : b_w[e]) v *= inv_n;
    for (auto& v : a_u[e]) v *= inv_n;
    for (auto& v : b_u[e]) v *= inv_n;
    c_w[e] *= inv_n;
  }

  auto risk = [&](int e, const std::vector<double>& w) {
    double quad = 0.0, lin = 0.0;
    for (int p = 0; p < dim; ++p) {
      lin += b_w[e][p] * w[p];
      for (int q = 0; q < dim; ++q) quad += w[p] * a_w[e][p * dim + q] * w[q];
    }
    return quad - 2.0 * lin + c_w[e];
  };
  auto risk_grad = [&](int e, const std::vector<double>& w,
                       std::vector<double>& g) {
    for (int p = 0; p < dim; ++p) {
      double acc = -2.0 * b_w[e][p];
      for (int q = 0; q < dim; ++q) acc += 2.0 * a_w[e][p * dim + q] * w[q];
      g[p] = acc;
    }
  };

  // Penalty formulation: mean risk + lambda * sum_{e<e'} (R_e - R_e')^2,
  // with continuation over lambda and gradient descent with backtracking.
  std::vector<double> w(dim, 0.0);
  const double grad_tol = 1e-7;
  for (double lambda : {10.0, 100.0, 1000.0}) {
    double step = 0.05;
    std::vector<double> grad(dim), ge(dim), gf(dim), trial(dim);
    auto objective = [&](const std::vector<double>& wv) {
      double mean_risk = 0.0;
      std::vector<double> risks(num_domains);
      for (int e = 0; e < num_domains; ++e) {
        risks[e] = risk(e, wv);
        mean_risk += risks[e];
      }
      mean_risk /= num_domains;
      double penalty = 0.0;
      for (int e = 0; e < num_domains; ++e)
        for (int f = e + 1; f < num_domains; ++f) {
          const double gap = risks[e] - risks[f];
          penalty += gap * gap;
        }
      return mean_risk + lambda * penalty;
    };
    bool converged = false;
    for (int iter = 0; iter < 200000; ++iter) {
      std::vector<double> risks(num_domains);
      for (int e = 0; e < num_domains; ++e) risks[e] = risk(e, w);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (int e = 0; e < num_domains; ++e) {
        risk_grad(e, w, ge);
        for (int p = 0; p < dim; ++p) grad[p] += ge[p] / num_domains;
      }
      for (int e = 0; e < num_domains; ++e) {
        risk_grad(e, w, ge);
        for (int f = e + 1; f < num_domains; ++f) {
          risk_grad(f, w, gf);
          const double gap = risks[e] - risks[f];
          for (int p = 0; p < dim; ++p) {
            grad[p] += lambda * 2.0 * gap * (ge[p] - gf[p]);
          }
        }
      }
      const double gnorm = norm_values(grad);
      if (gnorm <= grad_tol) {
        converged = true;
        break;
      }
      const double f0 = objective(w);
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        for (int p = 0; p < dim; ++p) trial[p] = w[p] - step * grad[p];
        if (objective(trial) < f0) {
          w = trial;
          step *= 1.25;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) {
        converged = gnorm <= 1e-4;  // stalled at numerical precision
        break;
      }
    }
    if (!converged) {
      raise(ErrorCode::non_convergence,
            "spurious elimination: gradient descent did not converge at "
            "lambda " + std::to_string(lambda));
    }
  }
  report.w_constrained = w;

  // Pooled unweighted OLS baseline: solve (sum A_e) w = sum b_e.
  std::vector<double> a_pool(dim * dim, 0.0), b_pool(dim, 0.0);
  for (int e = 0; e < num_domains; ++e) {
    for (int p = 0; p < dim * dim; ++p) a_pool[p] += a_u[e][p];
    for (int p = 0; p < dim; ++p) b_pool[p] += b_u[e][p];
  }
  report.w_ols = solve_dense(a_pool, b_pool);

  auto spu_norm = [&](const std::vector<double>& wv) {
    double s = 0.0;
    for (int k = 0; k < d_spu; ++k) s += wv[d_inv + k] * wv[d_inv + k];
    return std::sqrt(s);
  };
  report.w_spu_norm = spu_norm(report.w_constrained);
  report.ols_w_spu_norm = spu_norm(report.w_ols);
  double inv_err = 0.0;
  for (int k = 0; k < d_inv; ++k) {
    const double diff = report.w_constrained[k] - family.w_star[k];
    inv_err += diff * diff;
  }
  report.w_inv_err = std::sqrt(inv_err);
  report.pass = report.w_spu_norm <= 0.05 * report.w_star_norm;
  return report;
}

}  // namespace s2align::theory
