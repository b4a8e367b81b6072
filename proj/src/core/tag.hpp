#pragma once

// Text-attributed graph data model: ingestion, synthetic multi-domain corpus
// generation, text sparsification, subgraph sampling, text views, and
// personalized PageRank visit distributions.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/common.hpp"

namespace s2align::tag {

struct NodeRecord {
  int id = 0;
  std::optional<std::string> text;  // trimmed; never empty when present
  std::optional<int> label;
  std::optional<std::vector<double>> features;  // derived downstream
};

struct SparseTag {
  std::string name;
  int domain_id = 0;
  std::vector<NodeRecord> nodes;
  // Undirected, deduplicated, no self-loops, stored with u < v, sorted.
  std::vector<std::pair<int, int>> edges;

  std::size_t text_count() const;
  bool text_free() const { return text_count() == 0; }
  std::vector<std::vector<int>> adjacency() const;
};

struct Subgraph {
  std::vector<int> node_ids;  // parent node ids; center at position 0
  std::vector<std::pair<int, int>> local_edges;  // local indices, u < v
  int parent_domain = 0;
  std::size_t size() const { return node_ids.size(); }
};

struct Sample {
  Subgraph subgraph;
  std::string semantic_summary;
  std::string structure_description;
  int domain_id = 0;
};

struct GenConfig {
  int domains = 3;
  int nodes_per_domain = 200;
  int classes = 4;
  double p_intra = 0.2;
  double p_inter = 0.01;
  int vocab_size = 120;
  int tokens_per_node = 8;
  // Fraction of a node's tokens drawn from a domain-private vocabulary.
  double domain_shift = 0.25;
  // Among shared-vocabulary tokens, fraction drawn from the class band.
  double signature_rate = 0.75;
  // Class-dependent intra-class density: class c uses
  // p_intra * (1 + slope * (2c/(C-1) - 1)), clamped to [0,1].
  double intra_class_slope = 0.0;

  void validate() const;
};

struct SamplerConfig {
  int hops = 2;
  int max_nodes = 64;
};

// TAG-JSONL: header {"kind":"tag","domain_id":int,"name":string}, then one
// {"node":{...}} or {"edge":[u,v]} object per line.
SparseTag load_tag(const std::string& path);
void save_tag(const SparseTag& tag, const std::string& path);
std::string tag_to_jsonl(const SparseTag& tag);
SparseTag tag_from_jsonl(const std::string& content, const std::string& origin);

std::vector<SparseTag> generate_synthetic_corpus(const GenConfig& gen,
                                                 std::uint64_t seed);

// Keeps exactly round(keep_fraction * |texted nodes|) texts, chosen uniformly
// without replacement; everything else untouched.
SparseTag sparsify_text(const SparseTag& tag, double keep_fraction,
                        std::uint64_t seed);

Subgraph sample_subgraph(const SparseTag& tag, int center,
                         const SamplerConfig& cfg, std::uint64_t seed);

struct TextViews {
  std::string semantic_summary;
  std::string structure_description;
};

TextViews build_text_views(const SparseTag& tag, const Subgraph& sg,
                           std::size_t max_summary_tokens = 96);

// Personalized PageRank with teleport to the center (local index 0),
// solved by power iteration. Dangling nodes send all mass to the center.
std::vector<double> ppr_distribution(const Subgraph& sg, double restart = 0.15,
                                     double tol = 1e-8);

Sample make_sample(const SparseTag& tag, int center, const SamplerConfig& cfg,
                   std::uint64_t seed, std::size_t max_summary_tokens = 96);

// Prompt text per class, built from the class's signature tokens so that
// generated corpora stay zero-shot classifiable.
std::vector<std::string> default_label_prompts(const GenConfig& gen);

std::string shared_token(int index);
std::string private_token(int domain_id, int index);

}  // namespace s2align::tag
