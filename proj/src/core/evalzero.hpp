#pragma once

// Zero-shot downstream evaluation: node classification against label
// prompts, link prediction with a fixed similarity threshold, and
// bidirectional node-text retrieval.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core/autodiff.hpp"
#include "core/encoders.hpp"
#include "core/tag.hpp"

namespace s2align::evalzero {

struct LabelPromptSet {
  // Ordered by class index; indices must cover 0..C-1 exactly once.
  std::vector<std::pair<int, std::string>> prompts;
  void validate() const;
};

// Argmax of cosine similarity; ties break toward the smaller class index.
int zero_shot_classify(const std::vector<double>& graph_embedding,
                       const std::vector<std::vector<double>>& prompt_embeddings);

struct LinkPrediction {
  double score = 0.0;  // (1 + cos) / 2 in [0, 1]
  bool exists = false; // score strictly above the threshold
};

LinkPrediction link_predict(const std::vector<double>& z_u,
                            const std::vector<double>& z_v,
                            double threshold = 0.5);

// Mann-Whitney formulation: P(pos > neg) with ties counted 1/2.
double auc(const std::vector<double>& positives,
           const std::vector<double>& negatives);

struct RetrievalMetrics {
  double mrr = 0.0;
  std::map<int, double> recall_at;
};

// Ground truth is the identity pairing; candidates are ranked by descending
// cosine with stable tie-breaking by candidate index.
RetrievalMetrics retrieval_metrics(
    const std::vector<std::vector<double>>& queries,
    const std::vector<std::vector<double>>& candidates,
    const std::vector<int>& ks);

struct MetricSummary {
  std::vector<double> per_seed;
  double mean = 0.0;
  double std_dev = 0.0;  // population std over seeds
};

struct MetricsReport {
  std::string task;
  // metric name -> summary, e.g. "accuracy", "auc", "node_to_text.mrr"
  std::map<std::string, MetricSummary> metrics;
};

struct EvalOptions {
  std::vector<std::string> tasks{"classify", "link", "retrieval"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<int> ks{1, 5, 10};
  tag::SamplerConfig sampler;
  std::size_t max_summary_tokens = 96;
  double link_threshold = 0.5;
  // "affine" scores edges by (1+cos)/2; "raw" thresholds the cosine itself.
  std::string score_map = "affine";
  // Cap on evaluated nodes / edges per task; 0 means all.
  std::size_t max_nodes = 0;
  std::size_t max_edges = 0;
};

// Runs the requested tasks over every seed. The seed drives subgraph
// sampling and negative-edge sampling; one MetricsReport per task per tag.
std::vector<MetricsReport> evaluate_suite(const ad::Params& params,
                                          const enc::EncoderConfig& encoder,
                                          const std::vector<tag::SparseTag>& targets,
                                          const LabelPromptSet& prompt_set,
                                          const EvalOptions& options);

// Single-task helper used by the ablation driver: zero-shot accuracy of one
// tag under one seed.
double zero_shot_accuracy(const ad::Params& params,
                          const enc::EncoderConfig& encoder,
                          const tag::SparseTag& target,
                          const LabelPromptSet& prompt_set,
                          const EvalOptions& options, std::uint64_t seed);

}  // namespace s2align::evalzero
