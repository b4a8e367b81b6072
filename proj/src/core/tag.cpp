#include "core/tag.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace s2align::tag {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::size_t SparseTag::text_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes)
    if (node.text) ++n;
  return n;
}

std::vector<std::vector<int>> SparseTag::adjacency() const {
  std::vector<std::vector<int>> adj(nodes.size());
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  return adj;
}

void GenConfig::validate() const {
  if (domains < 1) raise(ErrorCode::config, "gen: domains must be >= 1");
  if (nodes_per_domain < 1) raise(ErrorCode::config, "gen: nodes_per_domain must be >= 1");
  if (classes < 1) raise(ErrorCode::config, "gen: classes must be >= 1");
  for (auto [name, p] : {std::pair<const char*, double>{"p_intra", p_intra},
                         {"p_inter", p_inter},
                         {"domain_shift", domain_shift},
                         {"signature_rate", signature_rate}}) {
    if (p < 0.0 || p > 1.0) {
      raise(ErrorCode::config, std::string("gen: ") + name + " outside [0,1]");
    }
  }
  if (vocab_size < classes) raise(ErrorCode::config, "gen: vocab_size < classes");
  if (tokens_per_node < 1) raise(ErrorCode::config, "gen: tokens_per_node must be >= 1");
}

// ---------------------------------------------------------------------------
// TAG-JSONL ingestion

SparseTag tag_from_jsonl(const std::string& content, const std::string& origin) {
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;

  auto parse_line = [&](const std::string& text) -> json {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      raise(ErrorCode::parse,
            origin + ":" + std::to_string(lineno) + ": malformed JSON line");
    }
    return j;
  };

  SparseTag tag;
  bool have_header = false;
  std::map<int, NodeRecord> nodes_by_id;
  std::vector<std::pair<int, int>> raw_edges;

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = parse_line(line);
    if (!have_header) {
      if (!j.contains("kind") || j["kind"] != "tag" ||
          !j.contains("domain_id") || !j["domain_id"].is_number_integer() ||
          !j.contains("name") || !j["name"].is_string()) {
        raise(ErrorCode::parse, origin + ":" + std::to_string(lineno) +
                                    ": expected header "
                                    "{\"kind\":\"tag\",\"domain_id\":int,"
                                    "\"name\":string}");
      }
      tag.domain_id = j["domain_id"].get<int>();
      tag.name = j["name"].get<std::string>();
      have_header = true;
      continue;
    }
    if (j.contains("node")) {
      const json& n = j["node"];
      if (!n.is_object() || !n.contains("id") || !n["id"].is_number_integer()) {
        raise(ErrorCode::parse,
              origin + ":" + std::to_string(lineno) + ": bad node record");
      }
      NodeRecord rec;
      rec.id = n["id"].get<int>();
      if (n.contains("text") && !n["text"].is_null()) {
        if (!n["text"].is_string()) {
          raise(ErrorCode::parse,
                origin + ":" + std::to_string(lineno) + ": node text not a string");
        }
        std::string t = trim(n["text"].get<std::string>());
        if (!t.empty()) rec.text = std::move(t);
      }
      if (n.contains("label") && !n["label"].is_null()) {
        if (!n["label"].is_number_integer()) {
          raise(ErrorCode::parse,
                origin + ":" + std::to_string(lineno) + ": node label not an int");
        }
        rec.label = n["label"].get<int>();
      }
      if (nodes_by_id.count(rec.id)) {
        raise(ErrorCode::validation, origin + ":" + std::to_string(lineno) +
                                         ": duplicate node id " +
                                         std::to_string(rec.id));
      }
      nodes_by_id.emplace(rec.id, std::move(rec));
    } else if (j.contains("edge")) {
      const json& e = j["edge"];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
          !e[1].is_number_integer()) {
        raise(ErrorCode::parse,
              origin + ":" + std::to_string(lineno) + ": bad edge record");
      }
      raw_edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    } else {
      raise(ErrorCode::parse, origin + ":" + std::to_string(lineno) +
                                  ": expected a node or edge object");
    }
  }
  if (!have_header) {
    raise(ErrorCode::parse, origin + ": empty file, missing header");
  }

  // Remap ids to 0..|V|-1 in ascending original order.
  std::map<int, int> remap;
  for (const auto& [id, rec] : nodes_by_id) {
    const int local = static_cast<int>(remap.size());
    remap.emplace(id, local);
    NodeRecord r = rec;
    r.id = local;
    tag.nodes.push_back(std::move(r));
  }

  std::set<std::pair<int, int>> edge_set;
  for (const auto& [a, b] : raw_edges) {
    auto ia = remap.find(a);
    auto ib = remap.find(b);
    if (ia == remap.end() || ib == remap.end()) {
      raise(ErrorCode::validation,
            origin + ": edge (" + std::to_string(a) + "," + std::to_string(b) +
                ") references an unknown node id");
    }
    int u = ia->second, v = ib->second;
    if (u == v) continue;  // self-loops dropped
    if (u > v) std::swap(u, v);
    edge_set.emplace(u, v);
  }
  tag.edges.assign(edge_set.begin(), edge_set.end());
  return tag;
}

SparseTag load_tag(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return tag_from_jsonl(buf.str(), path);
}

std::string tag_to_jsonl(const SparseTag& tag) {
  std::ostringstream out;
  json header{{"kind", "tag"}, {"domain_id", tag.domain_id}, {"name", tag.name}};
  out << header.dump() << "\n";
  for (const auto& node : tag.nodes) {
    json n{{"id", node.id}};
    n["text"] = node.text ? json(*node.text) : json(nullptr);
    n["label"] = node.label ? json(*node.label) : json(nullptr);
    out << json{{"node", n}}.dump() << "\n";
  }
  for (const auto& [u, v] : tag.edges) {
    out << json{{"edge", {u, v}}}.dump() << "\n";
  }
  return out.str();
}

void save_tag(const SparseTag& tag, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::io, "cannot write " + path);
  out << tag_to_jsonl(tag);
  if (!out) raise(ErrorCode::io, "write failed: " + path);
}

// ---------------------------------------------------------------------------
// Synthetic corpus

std::string shared_token(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%03d", index);
  return buf;
}

std::string private_token(int domain_id, int index) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "d%dx%03d", domain_id, index);
  return buf;
}

std::vector<SparseTag> generate_synthetic_corpus(const GenConfig& gen,
                                                 std::uint64_t seed) {
  gen.validate();
  std::vector<SparseTag> corpus;
  corpus.reserve(gen.domains);
  const int band = gen.vocab_size / gen.classes;

  for (int e = 1; e <= gen.domains; ++e) {
    Rng rng(derive_seed(seed, "corpus", static_cast<std::uint64_t>(e)));
    SparseTag tag;
    tag.domain_id = e;
    tag.name = "synthetic_domain_" + std::to_string(e);
    tag.nodes.resize(gen.nodes_per_domain);

    for (int i = 0; i < gen.nodes_per_domain; ++i) {
      NodeRecord& node = tag.nodes[i];
      node.id = i;
      node.label = i % gen.classes;  // balanced classes
      std::ostringstream text;
      for (int t = 0; t < gen.tokens_per_node; ++t) {
        if (t) text << " ";
        const double u = rng.uniform();
        if (u < gen.domain_shift) {
          text << private_token(e, static_cast<int>(rng.below(gen.vocab_size)));
        } else if (u < gen.domain_shift +
                           (1.0 - gen.domain_shift) * gen.signature_rate) {
          const int offset = static_cast<int>(rng.below(band));
          text << shared_token(*node.label * band + offset);
        } else {
          text << shared_token(static_cast<int>(rng.below(gen.vocab_size)));
        }
      }
      node.text = text.str();
    }

    for (int i = 0; i < gen.nodes_per_domain; ++i) {
      for (int j = i + 1; j < gen.nodes_per_domain; ++j) {
        const int ci = *tag.nodes[i].label;
        double p = gen.p_inter;
        if (ci == *tag.nodes[j].label) {
          double factor = 1.0;
          if (gen.classes > 1 && gen.intra_class_slope != 0.0) {
            factor += gen.intra_class_slope *
                      (2.0 * ci / (gen.classes - 1.0) - 1.0);
          }
          p = std::clamp(gen.p_intra * factor, 0.0, 1.0);
        }
        if (rng.uniform() < p) tag.edges.emplace_back(i, j);
      }
    }
    corpus.push_back(std::move(tag));
  }
  return corpus;
}

std::vector<std::string> default_label_prompts(const GenConfig& gen) {
  const int band = gen.vocab_size / gen.classes;
  std::vector<std::string> prompts(gen.classes);
  for (int c = 0; c < gen.classes; ++c) {
    std::ostringstream p;
    p << "category " << c << " :";
    const int picks = std::min(band, 6);
    for (int i = 0; i < picks; ++i) {
      p << " " << shared_token(c * band + i * band / picks);
    }
    prompts[c] = p.str();
  }
  return prompts;
}

// ---------------------------------------------------------------------------
// Sparsification

SparseTag sparsify_text(const SparseTag& tag, double keep_fraction,
                        std::uint64_t seed) {
  if (keep_fraction <= 0.0 || keep_fraction > 1.0) {
    raise(ErrorCode::invalid_argument, "sparsify_text: keep_fraction outside (0,1]");
  }
  SparseTag out = tag;
  if (keep_fraction == 1.0) return out;

  std::vector<std::size_t> texted;
  for (std::size_t i = 0; i < out.nodes.size(); ++i)
    if (out.nodes[i].text) texted.push_back(i);
  const std::size_t keep = static_cast<std::size_t>(
      std::lround(keep_fraction * static_cast<double>(texted.size())));

  Rng rng(derive_seed(seed, "sparsify", tag.domain_id));
  const auto chosen = rng.sample_without_replacement(texted.size(), keep);
  std::vector<bool> kept(texted.size(), false);
  for (auto c : chosen) kept[c] = true;
  for (std::size_t i = 0; i < texted.size(); ++i) {
    if (!kept[i]) out.nodes[texted[i]].text.reset();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subgraph sampling

Subgraph sample_subgraph(const SparseTag& tag, int center,
                         const SamplerConfig& cfg, std::uint64_t seed) {
  if (center < 0 || center >= static_cast<int>(tag.nodes.size())) {
    raise(ErrorCode::invalid_argument,
          "sample_subgraph: center " + std::to_string(center) + " out of range");
  }
  if (cfg.max_nodes < 1) {
    raise(ErrorCode::invalid_argument, "sample_subgraph: max_nodes < 1");
  }
  const auto adj = tag.adjacency();
  Rng rng(derive_seed(seed, "subgraph", tag.domain_id, center));

  std::vector<int> accepted{center};
  std::vector<bool> visited(tag.nodes.size(), false);
  visited[center] = true;
  std::vector<int> frontier{center};

  for (int hop = 0; hop < cfg.hops; ++hop) {
    if (static_cast<int>(accepted.size()) >= cfg.max_nodes) break;
    std::set<int> next_set;
    for (int u : frontier) {
      for (int v : adj[u]) {
        if (!visited[v]) next_set.insert(v);
      }
    }
    std::vector<int> next(next_set.begin(), next_set.end());
    const std::size_t budget = cfg.max_nodes - accepted.size();
    if (next.size() > budget) {
      const auto picks = rng.sample_without_replacement(next.size(), budget);
      std::vector<int> sampled;
      sampled.reserve(budget);
      for (auto p : picks) sampled.push_back(next[p]);
      next = std::move(sampled);
    }
    if (next.empty()) break;
    for (int v : next) {
      visited[v] = true;
      accepted.push_back(v);
    }
    frontier = std::move(next);
  }

  Subgraph sg;
  sg.parent_domain = tag.domain_id;
  sg.node_ids = std::move(accepted);
  std::vector<int> local_of(tag.nodes.size(), -1);
  for (std::size_t i = 0; i < sg.node_ids.size(); ++i) {
    local_of[sg.node_ids[i]] = static_cast<int>(i);
  }
  for (const auto& [u, v] : tag.edges) {
    const int lu = local_of[u], lv = local_of[v];
    if (lu >= 0 && lv >= 0) {
      sg.local_edges.emplace_back(std::min(lu, lv), std::max(lu, lv));
    }
  }
  std::sort(sg.local_edges.begin(), sg.local_edges.end());
  return sg;
}

// ---------------------------------------------------------------------------
// Text views

TextViews build_text_views(const SparseTag& tag, const Subgraph& sg,
                           std::size_t max_summary_tokens) {
  TextViews views;

  // Semantic summary: observed texts, center first, " | " separated,
  // truncated at max_summary_tokens whitespace tokens.
  std::vector<std::string> parts;
  std::size_t tokens = 0;
  for (int id : sg.node_ids) {
    const auto& text = tag.nodes[id].text;
    if (!text) continue;
    std::istringstream ts(*text);
    std::string tok;
    std::string piece;
    while (ts >> tok && tokens < max_summary_tokens) {
      if (!piece.empty()) piece += " ";
      piece += tok;
      ++tokens;
    }
    if (!piece.empty()) parts.push_back(std::move(piece));
    if (tokens >= max_summary_tokens) break;
  }
  if (parts.empty()) {
    views.semantic_summary = "unknown";
  } else {
    std::ostringstream sem;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i) sem << " | ";
      sem << parts[i];
    }
    views.semantic_summary = sem.str();
  }

  // Structure description: template over topology-only statistics plus the
  // text-coverage count.
  const std::size_t n = sg.size();
  const std::size_t m = sg.local_edges.size();
  std::vector<int> degree(n, 0);
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (const auto& [u, v] : sg.local_edges) {
    ++degree[u];
    ++degree[v];
    adj[u][v] = adj[v][u] = true;
  }
  std::size_t triangles = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!adj[i][j]) continue;
      for (std::size_t k = j + 1; k < n; ++k)
        if (adj[i][k] && adj[j][k]) ++triangles;
    }
  // Buckets: deg 0, 1, 2, 3, 4-7, 8+.
  std::size_t buckets[6] = {0, 0, 0, 0, 0, 0};
  for (int d : degree) {
    if (d <= 3) ++buckets[d];
    else if (d <= 7) ++buckets[4];
    else ++buckets[5];
  }
  std::size_t texted = 0;
  for (int id : sg.node_ids)
    if (tag.nodes[id].text) ++texted;

  std::ostringstream desc;
  desc << "nodes " << n << " edges " << m << " triangles " << triangles
       << " center_degree " << degree[0] << " deg0 " << buckets[0] << " deg1 "
       << buckets[1] << " deg2 " << buckets[2] << " deg3 " << buckets[3]
       << " deg4_7 " << buckets[4] << " deg8p " << buckets[5] << " texted "
       << texted;
  views.structure_description = desc.str();
  return views;
}

// ---------------------------------------------------------------------------
// Personalized PageRank

std::vector<double> ppr_distribution(const Subgraph& sg, double restart,
                                     double tol) {
  if (sg.size() == 0) {
    raise(ErrorCode::invalid_argument, "ppr_distribution: empty subgraph");
  }
  if (restart <= 0.0 || restart >= 1.0) {
    raise(ErrorCode::invalid_argument, "ppr_distribution: restart outside (0,1)");
  }
  const std::size_t n = sg.size();
  if (n == 1) return {1.0};

  std::vector<std::vector<int>> adj(n);
  for (const auto& [u, v] : sg.local_edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }

  std::vector<double> p(n, 0.0), next(n);
  p[0] = 1.0;
  const double damp = 1.0 - restart;
  for (int iter = 0; iter < 100000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    next[0] = restart;
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] == 0.0) continue;
      if (adj[i].empty()) {
        next[0] += damp * p[i];  // dangling: teleport to center
      } else {
        const double share = damp * p[i] / static_cast<double>(adj[i].size());
        for (int j : adj[i]) next[j] += share;
      }
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) delta += std::fabs(next[i] - p[i]);
    p.swap(next);
    if (delta < tol) break;
  }
  double total = 0.0;
  for (double v : p) total += v;
  for (auto& v : p) v /= total;
  return p;
}

Sample make_sample(const SparseTag& tag, int center, const SamplerConfig& cfg,
                   std::uint64_t seed, std::size_t max_summary_tokens) {
  Sample s;
  s.subgraph = sample_subgraph(tag, center, cfg, seed);
  auto views = build_text_views(tag, s.subgraph, max_summary_tokens);
  s.semantic_summary = std::move(views.semantic_summary);
  s.structure_description = std::move(views.structure_description);
  s.domain_id = tag.domain_id;
  return s;
}

}  // namespace s2align::tag
