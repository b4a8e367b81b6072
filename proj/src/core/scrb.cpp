#include "core/scrb.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "core/encoders.hpp"

namespace s2align::scrb {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

ad::Var log_density(ad::Tape& tape, const ad::Var& mean, const ad::Var& log_var,
                    const std::vector<double>& z) {
  if (mean.shape() != log_var.shape() || mean.shape().size() != 1 ||
      mean.shape()[0] != z.size()) {
    raise(ErrorCode::shape, "log_density: dim mismatch");
  }
  const std::size_t d = z.size();
  ad::Var zc = tape.constant_vector(z);
  ad::Var diff = ad::sub(zc, mean);
  ad::Var quad = ad::sum(ad::mul(ad::mul(diff, diff), ad::exp(ad::neg(log_var))));
  ad::Var inner = ad::add(quad, ad::sum(log_var));
  return ad::add_scalar(ad::smul(inner, -0.5),
                        -0.5 * static_cast<double>(d) * kLog2Pi);
}

double log_density_value(const std::vector<double>& mean,
                         const std::vector<double>& log_var,
                         const std::vector<double>& z) {
  if (mean.size() != z.size() || log_var.size() != z.size()) {
    raise(ErrorCode::shape, "log_density_value: dim mismatch");
  }
  double quad = 0.0, logdet = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double diff = z[k] - mean[k];
    quad += diff * diff * std::exp(-log_var[k]);
    logdet += log_var[k];
  }
  return -0.5 * (quad + logdet + static_cast<double>(z.size()) * kLog2Pi);
}

ad::Var density_loss(ad::Tape& tape, const ad::BoundParams& params,
                     const std::vector<std::vector<double>>& keys,
                     const std::vector<int>& domain_ids) {
  if (keys.empty() || keys.size() != domain_ids.size()) {
    raise(ErrorCode::invalid_argument, "density_loss: size mismatch or empty batch");
  }
  ad::Var acc;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const int e = domain_ids[i];
    const std::string mean_name = enc::density_mean_name(e);
    if (!params.vars().count(mean_name)) {
      raise(ErrorCode::unknown_domain,
            "density_loss: no density model for domain " + std::to_string(e));
    }
    ad::Var lp0 = log_density(tape, params[enc::density_mean_name(-1)],
                              params[enc::density_logvar_name(-1)], keys[i]);
    ad::Var lpe = log_density(tape, params[mean_name],
                              params[enc::density_logvar_name(e)], keys[i]);
    ad::Var term = ad::add(lp0, lpe);
    acc = i == 0 ? term : ad::add(acc, term);
  }
  return ad::smul(acc, -1.0 / static_cast<double>(keys.size()));
}

double density_ratio(const std::vector<double>& mean0,
                     const std::vector<double>& logvar0,
                     const std::vector<double>& mean_e,
                     const std::vector<double>& logvar_e,
                     const std::vector<double>& z, double gamma,
                     double epsilon) {
  if (gamma < 0.0) raise(ErrorCode::invalid_argument, "density_ratio: gamma < 0");
  if (!(epsilon > 0.0)) raise(ErrorCode::invalid_argument, "density_ratio: epsilon <= 0");
  const double lp0 = log_density_value(mean0, logvar0, z);
  const double lpe = log_density_value(mean_e, logvar_e, z);
  // log(p_e + eps) without leaving log space.
  const double lpe_guarded = logaddexp(lpe, std::log(epsilon));
  const double log_r = std::clamp(gamma * (lp0 - lpe_guarded), -60.0, 60.0);
  return std::exp(log_r);
}

double structural_stability(const std::vector<double>& ppr, std::size_t n) {
  double total = 0.0;
  for (double p : ppr) {
    if (p < 0.0) raise(ErrorCode::not_a_distribution, "structural_stability: negative mass");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-6) {
    raise(ErrorCode::not_a_distribution,
          "structural_stability: mass sums to " + std::to_string(total));
  }
  if (n <= 1) return 1.0;
  double entropy_term = 0.0;  // sum p ln p, with 0 ln 0 = 0
  for (double p : ppr) {
    if (p > 0.0) entropy_term += p * std::log(p);
  }
  return std::exp(entropy_term / std::log(static_cast<double>(n)));
}

double text_coverage(const tag::SparseTag& tag, const tag::Subgraph& sg) {
  if (sg.size() == 0) raise(ErrorCode::invalid_argument, "text_coverage: empty subgraph");
  std::size_t texted = 0;
  for (int id : sg.node_ids)
    if (tag.nodes[id].text) ++texted;
  return static_cast<double>(texted) / static_cast<double>(sg.size());
}

double consistency_score(const std::vector<double>& z_g_c,
                         const std::vector<double>& z_t_c) {
  const double na = norm_values(z_g_c);
  const double nb = norm_values(z_t_c);
  if (na < 1e-12 || nb < 1e-12) {
    raise(ErrorCode::zero_vector, "consistency_score: zero-norm input");
  }
  return (1.0 + dot_values(z_g_c, z_t_c) / (na * nb)) / 2.0;
}

double reliability(double d, double a, double c, const ScrbConfig& cfg) {
  if (cfg.lambda_d < 0.0 || cfg.lambda_a < 0.0 || cfg.lambda_c < 0.0) {
    raise(ErrorCode::invalid_argument, "reliability: negative lambda");
  }
  const double s = cfg.lambda_d * d + cfg.lambda_a * a + cfg.lambda_c * c;
  return std::clamp(s, 0.0, 1.0);
}

WeightResult sample_weights(const std::vector<double>& r,
                            const std::vector<double>& rho,
                            const std::vector<int>& domain_ids) {
  const std::size_t n = r.size();
  if (rho.size() != n || domain_ids.size() != n || n == 0) {
    raise(ErrorCode::invalid_argument, "sample_weights: size mismatch or empty");
  }
  std::map<int, double> domain_sum;
  std::map<int, std::size_t> domain_count;
  for (std::size_t i = 0; i < n; ++i) {
    domain_sum[domain_ids[i]] += r[i] * rho[i];
    domain_count[domain_ids[i]] += 1;
  }
  WeightResult out;
  out.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double denom = domain_sum[domain_ids[i]];
    if (denom > 0.0) {
      out.weights[i] = static_cast<double>(domain_count[domain_ids[i]]) *
                       (r[i] * rho[i]) / denom;
    } else {
      out.weights[i] = 1.0;
      out.fallback_used = true;
    }
  }
  return out;
}

DomainRisks domain_risks(const std::vector<ad::Var>& losses,
                         const std::vector<double>& weights,
                         const std::vector<int>& domain_ids) {
  const std::size_t n = losses.size();
  if (weights.size() != n || domain_ids.size() != n || n == 0) {
    raise(ErrorCode::invalid_argument, "domain_risks: size mismatch or empty");
  }
  std::map<int, std::vector<std::size_t>> by_domain;
  for (std::size_t i = 0; i < n; ++i) by_domain[domain_ids[i]].push_back(i);

  DomainRisks out;
  for (const auto& [e, members] : by_domain) {
    double wsum = 0.0;
    for (auto i : members) wsum += weights[i];
    if (!(wsum > 0.0)) {
      raise(ErrorCode::all_zero_weights,
            "domain_risks: zero weight mass in domain " + std::to_string(e));
    }
    ad::Var risk;
    bool first = true;
    for (auto i : members) {
      if (weights[i] == 0.0) continue;
      ad::Var term = ad::smul(losses[i], weights[i] / wsum);
      risk = first ? term : ad::add(risk, term);
      first = false;
    }
    out.domains.push_back(e);
    out.risks.push_back(risk);
  }
  ad::Var acc = out.risks[0];
  for (std::size_t k = 1; k < out.risks.size(); ++k)
    acc = ad::add(acc, out.risks[k]);
  out.mean_risk = ad::smul(acc, 1.0 / static_cast<double>(out.risks.size()));
  return out;
}

ad::Var risk_balance_loss(const DomainRisks& risks) {
  const std::size_t k = risks.risks.size();
  if (k == 0) raise(ErrorCode::invalid_argument, "risk_balance_loss: no domains");
  ad::Var acc;
  for (std::size_t i = 0; i < k; ++i) {
    ad::Var gap = ad::sub(risks.risks[i], risks.mean_risk);
    ad::Var sq = ad::mul(gap, gap);
    acc = i == 0 ? sq : ad::add(acc, sq);
  }
  return ad::smul(acc, 1.0 / static_cast<double>(k));
}

ad::Var total_loss(const ad::Var& align, const ad::Var& rec,
                   const ad::Var& risk, const ad::Var& den, double alpha,
                   double mu, double nu) {
  if (alpha < 0.0 || mu < 0.0 || nu < 0.0) {
    raise(ErrorCode::invalid_argument, "total_loss: negative coefficient");
  }
  ad::Var total = align;
  if (alpha != 0.0) total = ad::add(total, ad::smul(rec, alpha));
  if (mu != 0.0) total = ad::add(total, ad::smul(risk, mu));
  if (nu != 0.0) total = ad::add(total, ad::smul(den, nu));
  return total;
}

}  // namespace s2align::scrb
