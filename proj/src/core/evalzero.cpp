#include "core/evalzero.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace s2align::evalzero {

void LabelPromptSet::validate() const {
  if (prompts.empty()) {
    raise(ErrorCode::empty_prompt_set, "prompt set is empty");
  }
  std::set<int> seen;
  for (const auto& [cls, text] : prompts) {
    if (text.empty()) {
      raise(ErrorCode::validation, "empty prompt for class " + std::to_string(cls));
    }
    if (!seen.insert(cls).second) {
      raise(ErrorCode::validation, "duplicate prompt class " + std::to_string(cls));
    }
  }
  int expect = 0;
  for (int cls : seen) {
    if (cls != expect++) {
      raise(ErrorCode::validation, "prompt classes must cover 0..C-1 exactly");
    }
  }
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = std::max(norm_values(a), 1e-12);
  const double nb = std::max(norm_values(b), 1e-12);
  return dot_values(a, b) / (na * nb);
}

}  // namespace

int zero_shot_classify(const std::vector<double>& graph_embedding,
                       const std::vector<std::vector<double>>& prompt_embeddings) {
  if (prompt_embeddings.empty()) {
    raise(ErrorCode::empty_prompt_set, "zero_shot_classify: no prompts");
  }
  int best = 0;
  double best_sim = -2.0;
  for (std::size_t c = 0; c < prompt_embeddings.size(); ++c) {
    const double sim = cosine(graph_embedding, prompt_embeddings[c]);
    if (sim > best_sim) {  // ties keep the smaller class index
      best_sim = sim;
      best = static_cast<int>(c);
    }
  }
  return best;
}

LinkPrediction link_predict(const std::vector<double>& z_u,
                            const std::vector<double>& z_v, double threshold) {
  LinkPrediction out;
  out.score = (1.0 + cosine(z_u, z_v)) / 2.0;
  out.exists = out.score > threshold;
  return out;
}

double auc(const std::vector<double>& positives,
           const std::vector<double>& negatives) {
  if (positives.empty() || negatives.empty()) {
    raise(ErrorCode::empty_class, "auc: needs both positive and negative scores");
  }
  // Rank-sum form: sort all scores, assign mid-ranks to ties.
  struct Entry {
    double score;
    bool positive;
  };
  std::vector<Entry> all;
  all.reserve(positives.size() + negatives.size());
  for (double s : positives) all.push_back({s, true});
  for (double s : negatives) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double mid_rank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].positive) rank_sum_pos += mid_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

RetrievalMetrics retrieval_metrics(
    const std::vector<std::vector<double>>& queries,
    const std::vector<std::vector<double>>& candidates,
    const std::vector<int>& ks) {
  const std::size_t n = queries.size();
  if (n == 0 || candidates.size() != n) {
    raise(ErrorCode::invalid_argument,
          "retrieval_metrics: |queries| must equal |candidates| and be >= 1");
  }
  RetrievalMetrics out;
  std::vector<std::size_t> ranks(n);
  for (std::size_t q = 0; q < n; ++q) {
    const double true_sim = cosine(queries[q], candidates[q]);
    // rank = 1 + number of candidates strictly better, plus earlier-indexed ties.
    std::size_t rank = 1;
    for (std::size_t c = 0; c < n; ++c) {
      if (c == q) continue;
      const double sim = cosine(queries[q], candidates[c]);
      if (sim > true_sim || (sim == true_sim && c < q)) ++rank;
    }
    ranks[q] = rank;
  }
  double mrr = 0.0;
  for (auto r : ranks) mrr += 1.0 / static_cast<double>(r);
  out.mrr = mrr / static_cast<double>(n);
  for (int k : ks) {
    std::size_t hits = 0;
    for (auto r : ranks)
      if (r <= static_cast<std::size_t>(k)) ++hits;
    out.recall_at[k] = static_cast<double>(hits) / static_cast<double>(n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation suite

namespace {

MetricSummary summarize(std::vector<double> per_seed) {
  MetricSummary s;
  s.per_seed = std::move(per_seed);
  if (s.per_seed.empty()) return s;
  for (double v : s.per_seed) s.mean += v;
  s.mean /= static_cast<double>(s.per_seed.size());
  double var = 0.0;
  for (double v : s.per_seed) var += (v - s.mean) * (v - s.mean);
  s.std_dev = std::sqrt(var / static_cast<double>(s.per_seed.size()));
  return s;
}

// Content embedding of the node-centered sampled subgraph, computed on a
// throwaway tape with frozen parameters.
std::vector<double> node_content_embedding(const ad::Params& params,
                                           const enc::EncoderConfig& encoder,
                                           const tag::SparseTag& tag,
                                           int node, const EvalOptions& options,
                                           std::uint64_t seed) {
  ad::Tape tape;
  ad::BoundParams bound(tape, params, /*requires_grad=*/false);
  const tag::Subgraph sg =
      tag::sample_subgraph(tag, node, options.sampler, seed);
  return enc::graph_forward(tape, bound, encoder, tag, sg).content.value();
}

std::vector<std::vector<double>> embed_prompts(const ad::Params& params,
                                               const enc::EncoderConfig& encoder,
                                               const LabelPromptSet& prompt_set) {
  std::vector<std::vector<double>> out(prompt_set.prompts.size());
  for (const auto& [cls, text] : prompt_set.prompts) {
    ad::Tape tape;
    ad::BoundParams bound(tape, params, /*requires_grad=*/false);
    out[cls] = enc::text_content_forward(tape, bound, encoder,
                                         enc::hash_embed(text, encoder.hash_dim))
                   .value();
  }
  return out;
}

std::vector<int> eval_node_ids(const tag::SparseTag& tag, std::size_t cap,
                               bool labeled_only) {
  std::vector<int> ids;
  for (const auto& node : tag.nodes) {
    if (labeled_only && !node.label) continue;
    ids.push_back(node.id);
  }
  if (cap > 0 && ids.size() > cap) ids.resize(cap);
  return ids;
}

}  // namespace

double zero_shot_accuracy(const ad::Params& params,
                          const enc::EncoderConfig& encoder,
                          const tag::SparseTag& target,
                          const LabelPromptSet& prompt_set,
                          const EvalOptions& options, std::uint64_t seed) {
  prompt_set.validate();
  const auto prompt_embeddings = embed_prompts(params, encoder, prompt_set);
  const auto ids = eval_node_ids(target, options.max_nodes, true);
  if (ids.empty()) {
    raise(ErrorCode::validation, "zero_shot_accuracy: target has no labeled nodes");
  }
  std::vector<int> predicted(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    const auto z = node_content_embedding(
        params, encoder, target, ids[i], options,
        derive_seed(seed, "eval_subgraph", target.domain_id, ids[i]));
    predicted[i] = zero_shot_classify(z, prompt_embeddings);
  });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (predicted[i] == *target.nodes[ids[i]].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

std::vector<MetricsReport> evaluate_suite(const ad::Params& params,
                                          const enc::EncoderConfig& encoder,
                                          const std::vector<tag::SparseTag>& targets,
                                          const LabelPromptSet& prompt_set,
                                          const EvalOptions& options) {
  for (const auto& task : options.tasks) {
    if (task != "classify" && task != "link" && task != "retrieval") {
      raise(ErrorCode::unknown_task,
            "unknown task '" + task + "'; valid: classify, link, retrieval");
    }
  }
  if (options.seeds.empty()) {
    raise(ErrorCode::invalid_argument, "evaluate_suite: no seeds");
  }

  std::vector<MetricsReport> reports;
  for (const auto& target : targets) {
    for (const auto& task : options.tasks) {
      MetricsReport report;
      report.task = task + ":" + target.name;

      if (task == "classify") {
        std::vector<double> acc;
        for (auto seed : options.seeds) {
          acc.push_back(zero_shot_accuracy(params, encoder, target, prompt_set,
                                           options, seed));
        }
        report.metrics["accuracy"] = summarize(acc);
      } else if (task == "link") {
        std::vector<double> aucs, f1s, precisions, recalls;
        for (auto seed : options.seeds) {
          // Node embeddings once per seed, reused for all pairs.
          const auto ids = eval_node_ids(target, 0, false);
          std::vector<std::vector<double>> emb(ids.size());
          parallel_for(ids.size(), [&](std::size_t i) {
            emb[i] = node_content_embedding(
                params, encoder, target, ids[i], options,
                derive_seed(seed, "eval_subgraph", target.domain_id, ids[i]));
          });
          std::vector<std::pair<int, int>> positives = target.edges;
          if (options.max_edges > 0 && positives.size() > options.max_edges) {
            Rng rng(derive_seed(seed, "link_pos", target.domain_id));
            const auto picks = rng.sample_without_replacement(
                positives.size(), options.max_edges);
            std::vector<std::pair<int, int>> sampled;
            for (auto p : picks) sampled.push_back(positives[p]);
            positives = std::move(sampled);
          }
          if (positives.empty()) {
            raise(ErrorCode::validation, "link task: target has no edges");
          }
          // Uniform non-edges, same count as positives.
          std::set<std::pair<int, int>> edge_set(target.edges.begin(),
                                                 target.edges.end());
          std::vector<std::pair<int, int>> negatives;
          Rng rng(derive_seed(seed, "link_neg", target.domain_id));
          const std::size_t n_nodes = target.nodes.size();
          std::size_t attempts = 0;
          const std::size_t max_attempts = 1000 * (positives.size() + 1);
          while (negatives.size() < positives.size()) {
            if (++attempts > max_attempts) {
              raise(ErrorCode::validation,
                    "link task: could not sample enough non-edges");
            }
            int u = static_cast<int>(rng.below(n_nodes));
            int v = static_cast<int>(rng.below(n_nodes));
            if (u == v) continue;
            if (u > v) std::swap(u, v);
            if (edge_set.count({u, v})) continue;
            negatives.emplace_back(u, v);
          }
          const bool raw = options.score_map == "raw";
          auto score_pair = [&](int u, int v) {
            if (raw) {
              const double c = cosine(emb[u], emb[v]);
              return LinkPrediction{c, c > options.link_threshold};
            }
            return link_predict(emb[u], emb[v], options.link_threshold);
          };
          std::vector<double> pos_scores, neg_scores;
          std::size_t tp = 0, fp = 0, fn = 0;
          for (const auto& [u, v] : positives) {
            const auto lp = score_pair(u, v);
            pos_scores.push_back(lp.score);
            if (lp.exists) ++tp;
            else ++fn;
          }
          for (const auto& [u, v] : negatives) {
            const auto lp = score_pair(u, v);
            neg_scores.push_back(lp.score);
            if (lp.exists) ++fp;
          }
          aucs.push_back(auc(pos_scores, neg_scores));
          const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
          const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
          precisions.push_back(precision);
          recalls.push_back(recall);
          f1s.push_back(precision + recall > 0.0
                            ? 2.0 * precision * recall / (precision + recall)
                            : 0.0);
        }
        report.metrics["auc"] = summarize(aucs);
        report.metrics["f1"] = summarize(f1s);
        report.metrics["precision"] = summarize(precisions);
        report.metrics["recall"] = summarize(recalls);
      } else {  // retrieval
        std::vector<double> n2t_mrr, t2n_mrr;
        std::map<int, std::vector<double>> n2t_recall, t2n_recall;
        for (auto seed : options.seeds) {
          std::vector<int> texted;
          for (const auto& node : target.nodes)
            if (node.text) texted.push_back(node.id);
          if (options.max_nodes > 0 && texted.size() > options.max_nodes) {
            texted.resize(options.max_nodes);
          }
          if (texted.empty()) {
            raise(ErrorCode::validation, "retrieval task: target has no texted nodes");
          }
          std::vector<std::vector<double>> node_emb(texted.size());
          std::vector<std::vector<double>> text_emb(texted.size());
          parallel_for(texted.size(), [&](std::size_t i) {
            node_emb[i] = node_content_embedding(
                params, encoder, target, texted[i], options,
                derive_seed(seed, "eval_subgraph", target.domain_id, texted[i]));
            ad::Tape tape;
            ad::BoundParams bound(tape, params, false);
            text_emb[i] =
                enc::text_content_forward(
                    tape, bound, encoder,
                    enc::hash_embed(*target.nodes[texted[i]].text,
                                    encoder.hash_dim))
                    .value();
          });
          const auto n2t = retrieval_metrics(node_emb, text_emb, options.ks);
          const auto t2n = retrieval_metrics(text_emb, node_emb, options.ks);
          n2t_mrr.push_back(n2t.mrr);
          t2n_mrr.push_back(t2n.mrr);
          for (int k : options.ks) {
            n2t_recall[k].push_back(n2t.recall_at.at(k));
            t2n_recall[k].push_back(t2n.recall_at.at(k));
          }
        }
        report.metrics["node_to_text.mrr"] = summarize(n2t_mrr);
        report.metrics["text_to_node.mrr"] = summarize(t2n_mrr);
        for (int k : options.ks) {
          report.metrics["node_to_text.recall@" + std::to_string(k)] =
              summarize(n2t_recall[k]);
          report.metrics["text_to_node.recall@" + std::to_string(k)] =
              summarize(t2n_recall[k]);
        }
      }
      reports.push_back(std::move(report));
    }
  }
  return reports;
}

}  // namespace s2align::evalzero
