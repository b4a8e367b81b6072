#include "core/encoders.hpp"

#include <cctype>
#include <cmath>

namespace s2align::enc {

void EncoderConfig::validate() const {
  if (hidden_dim < 2 || embed_dim < 2 || hash_dim < 2) {
    raise(ErrorCode::config, "encoder: all dims must be >= 2");
  }
  if (mp_layers < 1) raise(ErrorCode::config, "encoder: mp_layers must be >= 1");
}

HashEmbedding hash_embed(std::string_view text, int hash_dim) {
  if (hash_dim < 1) raise(ErrorCode::invalid_argument, "hash_embed: hash_dim < 1");
  HashEmbedding out;
  out.values.assign(hash_dim, 0.0);
  std::string token;
  bool any = false;
  auto flush = [&] {
    if (token.empty()) return;
    any = true;
    const std::uint64_t h1 = fnv1a64(token);
    // Independent second hash for the sign bit.
    const std::uint64_t h2 = fnv1a64(token, 0x9e3779b97f4a7c15ULL);
    const std::size_t bucket = h1 % static_cast<std::uint64_t>(hash_dim);
    out.values[bucket] += (h2 & 1ULL) ? 1.0 : -1.0;
    token.clear();
  };
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  if (!any) {
    out.empty = true;
    return out;
  }
  double nrm = norm_values(out.values);
  if (nrm > 0.0) {
    for (auto& v : out.values) v /= nrm;
  } else {
    // Signed counts can cancel exactly; treat as empty evidence.
    out.empty = true;
  }
  return out;
}

std::string density_mean_name(int domain_id) {
  return domain_id < 0 ? "density.global.mean"
                       : "density.domain" + std::to_string(domain_id) + ".mean";
}

std::string density_logvar_name(int domain_id) {
  return domain_id < 0
             ? "density.global.logvar"
             : "density.domain" + std::to_string(domain_id) + ".logvar";
}

namespace {

std::vector<double> uniform_init(Rng& rng, std::size_t fan_in, std::size_t count) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> w(count);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return w;
}

void add_linear(ad::Params& params, Rng& rng, const std::string& name,
                std::size_t in_dim, std::size_t out_dim) {
  params.add(name + ".w", {in_dim, out_dim},
             uniform_init(rng, in_dim, in_dim * out_dim));
  params.add(name + ".b", {out_dim}, std::vector<double>(out_dim, 0.0));
}

}  // namespace

ad::Params init_params(const EncoderConfig& cfg,
                       const std::vector<int>& domain_ids, std::uint64_t seed) {
  cfg.validate();
  ad::Params params;
  Rng rng(derive_seed(seed, "init_params"));
  const std::size_t input_dim = static_cast<std::size_t>(cfg.hash_dim) + 3;
  const std::size_t hidden = cfg.hidden_dim;
  const std::size_t d = cfg.embed_dim;

  for (int layer = 0; layer < cfg.mp_layers; ++layer) {
    const std::size_t in = layer == 0 ? input_dim : hidden;
    add_linear(params, rng, "graph.layer" + std::to_string(layer), in, hidden);
  }
  add_linear(params, rng, "graph.head_content", hidden, d);
  add_linear(params, rng, "graph.head_structure", hidden, d);
  add_linear(params, rng, "text.content", cfg.hash_dim, d);
  add_linear(params, rng, "text.structure", cfg.hash_dim, d);
  add_linear(params, rng, "recon", d, d);

  auto add_density = [&](int domain_id) {
    params.add(density_mean_name(domain_id), {d}, std::vector<double>(d, 0.0));
    params.add(density_logvar_name(domain_id), {d}, std::vector<double>(d, 0.0));
  };
  add_density(-1);  // global model
  for (int e : domain_ids) add_density(e);
  return params;
}

std::vector<double> node_input_matrix(const tag::SparseTag& tag,
                                      const tag::Subgraph& sg, int hash_dim) {
  const std::size_t n = sg.size();
  const std::size_t cols = static_cast<std::size_t>(hash_dim) + 3;
  std::vector<int> degree(n, 0);
  for (const auto& [u, v] : sg.local_edges) {
    ++degree[u];
    ++degree[v];
  }
  std::vector<double> x(n * cols, 0.0);
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = tag.nodes[sg.node_ids[i]];
    const HashEmbedding h =
        hash_embed(node.text ? std::string_view(*node.text) : "unknown",
                   hash_dim);
    double* xrow = &x[i * cols];
    std::copy(h.values.begin(), h.values.end(), xrow);
    xrow[hash_dim] = static_cast<double>(degree[i]) / denom;
    xrow[hash_dim + 1] = i == 0 ? 1.0 : 0.0;
    xrow[hash_dim + 2] = node.text ? 1.0 : 0.0;
  }
  return x;
}

GraphEmbeddings graph_forward(ad::Tape& tape, const ad::BoundParams& params,
                              const EncoderConfig& cfg,
                              const tag::SparseTag& tag,
                              const tag::Subgraph& sg) {
  const std::size_t n = sg.size();
  const std::size_t cols = static_cast<std::size_t>(cfg.hash_dim) + 3;
  std::vector<std::vector<int>> adj(n);
  for (const auto& [u, v] : sg.local_edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }

  // Layer 0 input is constant, so its neighborhood mean is precomputed off
  // the tape.
  std::vector<double> x = node_input_matrix(tag, sg, cfg.hash_dim);
  std::vector<double> m0(n * cols, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = &m0[i * cols];
    const double* self = &x[i * cols];
    for (std::size_t c = 0; c < cols; ++c) orow[c] = self[c];
    for (int j : adj[i]) {
      const double* nrow = &x[static_cast<std::size_t>(j) * cols];
      for (std::size_t c = 0; c < cols; ++c) orow[c] += nrow[c];
    }
    const double inv = 1.0 / (1.0 + static_cast<double>(adj[i].size()));
    for (std::size_t c = 0; c < cols; ++c) orow[c] *= inv;
  }

  ad::Var h = tape.constant({n, cols}, std::move(m0));
  for (int layer = 0; layer < cfg.mp_layers; ++layer) {
    const std::string name = "graph.layer" + std::to_string(layer);
    if (layer > 0) h = ad::neighbor_mean(adj, h);
    h = ad::tanh(ad::add_rowvec(ad::matmul(h, params[name + ".w"]),
                                params[name + ".b"]));
  }
  ad::Var pooled = ad::mean_rows(h);
  ad::Var zc = ad::l2_normalize(
      ad::add(ad::vecmat(pooled, params["graph.head_content.w"]),
              params["graph.head_content.b"]));
  ad::Var zs = ad::l2_normalize(
      ad::add(ad::vecmat(pooled, params["graph.head_structure.w"]),
              params["graph.head_structure.b"]));
  return {zc, zs};
}

namespace {

ad::Var project(ad::Tape& tape, const ad::BoundParams& params,
                const std::string& name, const HashEmbedding& input) {
  ad::Var x = tape.constant_vector(input.values);
  return ad::l2_normalize(ad::tanh(
      ad::add(ad::vecmat(x, params[name + ".w"]), params[name + ".b"])));
}

}  // namespace

TextEmbeddings text_forward(ad::Tape& tape, const ad::BoundParams& params,
                            const EncoderConfig& cfg,
                            const HashEmbedding& semantic,
                            const HashEmbedding& structure) {
  if (static_cast<int>(semantic.values.size()) != cfg.hash_dim ||
      static_cast<int>(structure.values.size()) != cfg.hash_dim) {
    raise(ErrorCode::shape, "text_forward: hash embedding dim mismatch");
  }
  return {project(tape, params, "text.content", semantic),
          project(tape, params, "text.structure", structure)};
}

ad::Var text_content_forward(ad::Tape& tape, const ad::BoundParams& params,
                             const EncoderConfig& cfg,
                             const HashEmbedding& semantic) {
  if (static_cast<int>(semantic.values.size()) != cfg.hash_dim) {
    raise(ErrorCode::shape, "text_content_forward: hash embedding dim mismatch");
  }
  return project(tape, params, "text.content", semantic);
}

}  // namespace s2align::enc
