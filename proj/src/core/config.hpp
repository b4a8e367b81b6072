#pragma once

// Single run configuration. Defaults live here; JSON parsing is strict
// (unknown keys are configuration errors) and the resolved config is echoed
// into every output artifact.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core/encoders.hpp"
#include "core/scrb.hpp"
#include "core/tag.hpp"

namespace s2align::config {

struct TrainingConfig {
  int batch_size = 24;
  int steps = 300;
  double lr = 1e-5;
  double weight_decay = 1e-5;
  double tau = 0.1;
};

struct ObjectiveConfig {
  double alpha = 1.0;
  double mu = 1.0;
  double nu = 0.5;
};

struct AblationConfig {
  bool disable_enhance = false;  // force kappa to 0
  bool uniform_weights = false;  // omega == 1
};

struct SparsityConfig {
  double keep_fraction = 0.10;
  bool at_generate = false;
};

struct EvalConfig {
  std::vector<std::string> tasks{"classify", "link", "retrieval"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<int> ks{1, 5, 10};
  std::string score_map = "affine";  // (1+cos)/2; "raw" uses cosine directly
  std::size_t max_nodes = 0;
  std::size_t max_edges = 0;
  std::string prompts_file;
};

struct VerifyConfig {
  int domains = 3;
  int d_inv = 1;
  int d_spu = 1;
  std::size_t mc_samples = 200000;
  double tol_rel = 0.02;
  bool violation = false;
};

struct CorpusConfig {
  tag::GenConfig gen;
  std::vector<std::string> files;     // when non-empty, load instead of generate
  std::vector<int> holdout_domains;   // domain ids excluded from training
};

struct RunConfig {
  std::uint64_t seed = 7;
  CorpusConfig corpus;
  SparsityConfig sparsity;
  tag::SamplerConfig sampler;
  enc::EncoderConfig encoder;
  TrainingConfig training;
  scrb::ScrbConfig scrb;
  ObjectiveConfig objective;
  AblationConfig ablation;
  EvalConfig eval;
  VerifyConfig verify;
  std::size_t max_summary_tokens = 96;

  // Holdout defaults to the last generated domain when unspecified.
  std::vector<int> effective_holdout() const;

  void validate() const;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
};

}  // namespace s2align::config
