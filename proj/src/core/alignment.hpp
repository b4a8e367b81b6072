#pragma once

// Alignment loss stack: structure reconstruction against a gradient-detached
// graph-side target, consistency-gated structural injection into the text
// anchor, per-sample symmetric contrastive losses, and their weighted mean.

#include <vector>

#include "core/autodiff.hpp"

namespace s2align::align {

// phi_rec: linear(d->d) + tanh + L2-normalize over the text structure
// embedding.
ad::Var reconstruct_structure(const ad::BoundParams& params,
                              const ad::Var& z_t_s);

// L_rec = mean_i [1 - sim(z_hat_i, z_bar_i)] where z_bar is a detached copy
// of the graph structure embedding. Gradients reach phi_rec and the text
// branch only.
ad::Var recon_loss(ad::Tape& tape, const std::vector<ad::Var>& reconstructed,
                   const std::vector<std::vector<double>>& detached_targets);

// kappa(a, b) = (1 + cos(a, b)) / 2 on plain values.
double consistency_gate(const std::vector<double>& a,
                        const std::vector<double>& b);

// Enhanced text anchor: normalize(z_t_c + kappa(z_hat, z_bar) * z_hat).
// Falls back to z_t_c when the pre-normalization sum nearly vanishes.
// The gate is part of the differentiable graph (z_bar enters as a constant).
ad::Var enhance_text(ad::Tape& tape, const ad::Var& z_t_c,
                     const ad::Var& z_hat,
                     const std::vector<double>& z_bar_detached);

// Symmetric InfoNCE with in-batch negatives over the content pairs, one
// scalar per sample. Requires batch size >= 2.
std::vector<ad::Var> per_sample_losses(const std::vector<ad::Var>& z_g_c,
                                       const std::vector<ad::Var>& z_t_enh,
                                       double tau);

ad::Var per_sample_loss(const std::vector<ad::Var>& z_g_c,
                        const std::vector<ad::Var>& z_t_enh, double tau,
                        std::size_t i);

// Weighted mean sum(w_i l_i) / sum(w_i); weights enter as constants.
ad::Var weighted_align_loss(const std::vector<ad::Var>& losses,
                            const std::vector<double>& weights);

}  // namespace s2align::align
