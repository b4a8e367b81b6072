#pragma once

// Content/structure factorized encoders. A shared message-passing trunk with
// two readout heads produces the graph-side pair (content, structure); a
// frozen feature-hashing embedder plus two trainable projectors produces the
// text-side pair.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "core/autodiff.hpp"
#include "core/tag.hpp"

namespace s2align::enc {

struct EncoderConfig {
  int hidden_dim = 64;
  int embed_dim = 64;
  int mp_layers = 2;
  int hash_dim = 256;

  void validate() const;
};

struct HashEmbedding {
  std::vector<double> values;
  bool empty = false;  // no tokens; values stay all-zero (the one unnormalized case)
};

// Frozen deterministic embedder: lowercase, split on non-alphanumerics,
// signed 64-bit FNV-1a hashing into hash_dim buckets, L2-normalized counts.
HashEmbedding hash_embed(std::string_view text, int hash_dim);

// All trainable tensors: graph trunk + heads, text projectors, reconstruction
// head, and one密度 pair per training domain plus the global one.
ad::Params init_params(const EncoderConfig& cfg,
                       const std::vector<int>& domain_ids, std::uint64_t seed);

// Per-node inputs: [hash_embed(text or "unknown"), degree/(n-1), is_center,
// has_text]. Returns a row-major (n, hash_dim+3) matrix.
std::vector<double> node_input_matrix(const tag::SparseTag& tag,
                                      const tag::Subgraph& sg, int hash_dim);

struct GraphEmbeddings {
  ad::Var content;
  ad::Var structure;
};

GraphEmbeddings graph_forward(ad::Tape& tape, const ad::BoundParams& params,
                              const EncoderConfig& cfg,
                              const tag::SparseTag& tag,
                              const tag::Subgraph& sg);

struct TextEmbeddings {
  ad::Var content;
  ad::Var structure;
};

TextEmbeddings text_forward(ad::Tape& tape, const ad::BoundParams& params,
                            const EncoderConfig& cfg,
                            const HashEmbedding& semantic,
                            const HashEmbedding& structure);

// Content projector applied to a single hash embedding (used for label
// prompts and retrieval candidates).
ad::Var text_content_forward(ad::Tape& tape, const ad::BoundParams& params,
                             const EncoderConfig& cfg,
                             const HashEmbedding& semantic);

std::string density_mean_name(int domain_id);
std::string density_logvar_name(int domain_id);

}  // namespace s2align::enc
