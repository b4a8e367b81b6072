#pragma once

// End-to-end drivers: stratified batch assembly, the combined training
// objective, the training loop, checkpoint I/O, and the report-producing
// entry points behind the CLI (generate / train / eval / verify / ablate).

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core/alignment.hpp"
#include "core/autodiff.hpp"
#include "core/config.hpp"
#include "core/encoders.hpp"
#include "core/evalzero.hpp"
#include "core/scrb.hpp"
#include "core/tag.hpp"

namespace s2align::pipeline {

struct BatchItem {
  tag::Sample sample;
  std::vector<double> ppr;
  double stability = 0.0;  // d_i
  double coverage = 0.0;   // a_i
  int tag_index = 0;       // into the training corpus
};

struct BatchData {
  std::vector<BatchItem> items;
  std::vector<int> domain_ids;
};

// Stratified batch: equal counts per training domain, centers drawn without
// replacement per domain. batch_size must be divisible by the domain count.
BatchData make_batch(const std::vector<tag::SparseTag>& train_tags,
                     const config::RunConfig& cfg, std::uint64_t step_seed);

// All quantities the objective treats as constants (everything behind a
// detach). Capturing them once and replaying them keeps finite-difference
// gradient checks faithful to the detach semantics.
struct DetachedContext {
  std::vector<std::vector<double>> recon_targets;  // detach(z_g_s)
  std::vector<std::vector<double>> density_keys;   // detach(z_g_s)
  std::vector<double> ratios;                      // r_i
  std::vector<double> consistency;                 // c_i
  std::vector<double> reliability;                 // rho_i
  std::vector<double> weights;                     // omega_i
  bool weight_fallback = false;
};

struct LossBundle {
  ad::Var align;
  ad::Var rec;
  ad::Var risk;
  ad::Var den;
  ad::Var total;
  std::vector<ad::Var> per_sample;
  std::vector<double> kappa;  // gate values per sample
  scrb::DomainRisks risks;
  DetachedContext detached;
};

// Forward pass over a batch producing every loss component. When `frozen` is
// non-null its detached quantities are reused instead of recomputed, so the
// bundle is a pure function of the parameters.
LossBundle batch_losses(ad::Tape& tape, const ad::BoundParams& params,
                        const std::vector<tag::SparseTag>& train_tags,
                        const BatchData& batch, const config::RunConfig& cfg,
                        const DetachedContext* frozen);

// Loss closure over a fixed batch for gradient checking; detached context is
// captured at the current parameters and then frozen.
ad::LossFn frozen_loss_fn(const std::vector<tag::SparseTag>& train_tags,
                          const BatchData& batch, const config::RunConfig& cfg,
                          const ad::Params& at_params,
                          const std::string& component);

struct StepLog {
  int step = 0;
  double align = 0.0, rec = 0.0, risk = 0.0, den = 0.0, total = 0.0;
};

struct TrainResult {
  ad::Params params;
  std::vector<StepLog> log;
  std::vector<int> train_domain_ids;
};

// Full training loop: stratified batches, combined objective, AdamW,
// per-component finiteness checks, JSONL logging.
TrainResult train(const std::vector<tag::SparseTag>& corpus,
                  const config::RunConfig& cfg, std::ostream* train_log,
                  std::ostream* scrb_log);

// Splits a corpus into training and holdout tags by domain id.
void split_corpus(const std::vector<tag::SparseTag>& corpus,
                  const std::vector<int>& holdout,
                  std::vector<tag::SparseTag>& train_tags,
                  std::vector<tag::SparseTag>& holdout_tags);

// ---------------------------------------------------------------------------
// Checkpoints (JSON; values round-trip bit-exact)

void save_checkpoint(const ad::Params& params, const config::RunConfig& cfg,
                     const std::vector<int>& train_domain_ids,
                     const std::string& path);

struct Checkpoint {
  ad::Params params;
  config::RunConfig cfg;
  std::vector<int> train_domain_ids;
};

Checkpoint load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Corpus + prompts I/O

struct Corpus {
  std::vector<tag::SparseTag> tags;
  std::optional<tag::GenConfig> gen;  // set when generated (prompts derivable)
};

Corpus generate_corpus(const config::RunConfig& cfg);
Corpus load_corpus(const std::vector<std::string>& paths);
// Writes one TAG-JSONL per tag plus manifest.json and (when derivable)
// prompts.json; returns the manifest.
nlohmann::json save_corpus(const Corpus& corpus, const config::RunConfig& cfg,
                           const std::string& out_dir);

evalzero::LabelPromptSet prompts_from_json(const nlohmann::json& j);
evalzero::LabelPromptSet prompts_from_file(const std::string& path);
evalzero::LabelPromptSet default_prompts(const tag::GenConfig& gen);

// ---------------------------------------------------------------------------
// Report-producing drivers

nlohmann::json run_eval(const Checkpoint& checkpoint,
                        const std::vector<tag::SparseTag>& targets,
                        const evalzero::LabelPromptSet& prompts,
                        const config::RunConfig& cfg);

nlohmann::json run_verify(const config::RunConfig& cfg);

nlohmann::json run_ablate(const Corpus& corpus, const config::RunConfig& cfg);

// Renders any of the JSON reports as a plain-text table.
std::string render_table(const nlohmann::json& report);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace s2align::pipeline
