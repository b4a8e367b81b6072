#include "core/alignment.hpp"

#include <cmath>

namespace s2align::align {

ad::Var reconstruct_structure(const ad::BoundParams& params,
                              const ad::Var& z_t_s) {
  return ad::l2_normalize(ad::tanh(
      ad::add(ad::vecmat(z_t_s, params["recon.w"]), params["recon.b"])));
}

ad::Var recon_loss(ad::Tape& tape, const std::vector<ad::Var>& reconstructed,
                   const std::vector<std::vector<double>>& detached_targets) {
  if (reconstructed.empty() || reconstructed.size() != detached_targets.size()) {
    raise(ErrorCode::invalid_argument, "recon_loss: size mismatch or empty batch");
  }
  ad::Var acc;
  for (std::size_t i = 0; i < reconstructed.size(); ++i) {
    ad::Var target = tape.constant_vector(detached_targets[i]);
    ad::Var term = ad::add_scalar(
        ad::neg(ad::cosine_similarity(reconstructed[i], target)), 1.0);
    acc = i == 0 ? term : ad::add(acc, term);
  }
  return ad::smul(acc, 1.0 / static_cast<double>(reconstructed.size()));
}

double consistency_gate(const std::vector<double>& a,
                        const std::vector<double>& b) {
  const double na = norm_values(a);
  const double nb = norm_values(b);
  if (na < 1e-12 || nb < 1e-12) {
    raise(ErrorCode::zero_vector, "consistency_gate: zero-norm input");
  }
  return (1.0 + dot_values(a, b) / (na * nb)) / 2.0;
}

ad::Var enhance_text(ad::Tape& tape, const ad::Var& z_t_c,
                     const ad::Var& z_hat,
                     const std::vector<double>& z_bar_detached) {
  ad::Var z_bar = tape.constant_vector(z_bar_detached);
  ad::Var kappa = ad::smul(
      ad::add_scalar(ad::cosine_similarity(z_hat, z_bar), 1.0), 0.5);
  ad::Var injected = ad::add(z_t_c, ad::scale(z_hat, kappa));
  if (norm_values(injected.value()) < 1e-8) {
    return z_t_c;  // degenerate cancellation guard
  }
  return ad::l2_normalize(injected);
}

std::vector<ad::Var> per_sample_losses(const std::vector<ad::Var>& z_g_c,
                                       const std::vector<ad::Var>& z_t_enh,
                                       double tau) {
  const std::size_t batch = z_g_c.size();
  if (batch < 2) {
    raise(ErrorCode::batch_too_small,
          "per_sample_losses: contrastive loss needs a batch of >= 2, got " +
              std::to_string(batch));
  }
  if (z_t_enh.size() != batch) {
    raise(ErrorCode::invalid_argument, "per_sample_losses: batch size mismatch");
  }
  if (!(tau > 0.0)) raise(ErrorCode::invalid_argument, "per_sample_losses: tau <= 0");

  // Embeddings are unit-norm, so the similarity matrix is a plain product.
  ad::Var graph_mat = ad::stack_rows(z_g_c);
  ad::Var text_mat = ad::stack_rows(z_t_enh);
  ad::Var logits = ad::smul(ad::matmul_nt(graph_mat, text_mat), 1.0 / tau);

  std::vector<ad::Var> losses;
  losses.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    ad::Var row_i = ad::row(logits, i);
    ad::Var col_i = ad::col(logits, i);
    ad::Var positive = ad::index(row_i, i);
    ad::Var graph_to_text = ad::sub(ad::logsumexp(row_i), positive);
    ad::Var text_to_graph = ad::sub(ad::logsumexp(col_i), positive);
    losses.push_back(ad::smul(ad::add(graph_to_text, text_to_graph), 0.5));
  }
  return losses;
}

ad::Var per_sample_loss(const std::vector<ad::Var>& z_g_c,
                        const std::vector<ad::Var>& z_t_enh, double tau,
                        std::size_t i) {
  if (i >= z_g_c.size()) {
    raise(ErrorCode::invalid_argument, "per_sample_loss: index out of range");
  }
  return per_sample_losses(z_g_c, z_t_enh, tau)[i];
}

ad::Var weighted_align_loss(const std::vector<ad::Var>& losses,
                            const std::vector<double>& weights) {
  if (losses.empty() || losses.size() != weights.size()) {
    raise(ErrorCode::invalid_argument, "weighted_align_loss: size mismatch");
  }
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) {
      raise(ErrorCode::invalid_argument, "weighted_align_loss: negative weight");
    }
    total += w;
  }
  if (!(total > 0.0)) {
    raise(ErrorCode::all_zero_weights, "weighted_align_loss: all weights zero");
  }
  ad::Var acc;
  bool first = true;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (weights[i] == 0.0) continue;
    ad::Var term = ad::smul(losses[i], weights[i] / total);
    acc = first ? term : ad::add(acc, term);
    first = false;
  }
  return acc;
}

}  // namespace s2align::align
