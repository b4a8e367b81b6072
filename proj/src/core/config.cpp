#include "core/config.hpp"

#include <fstream>
#include <set>

namespace s2align::config {

using nlohmann::json;

namespace {

// Strict field reader: the allowed key set is declared up front and any
// other key is a configuration error.
class Fields {
 public:
  Fields(const json& j, std::string where,
         std::initializer_list<const char*> allowed)
      : j_(j), where_(std::move(where)) {
    if (!j.is_object()) {
      raise(ErrorCode::config, where_ + ": expected a JSON object");
    }
    std::set<std::string> allowed_set(allowed.begin(), allowed.end());
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!allowed_set.count(it.key())) {
        raise(ErrorCode::config, where_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      raise(ErrorCode::config, where_ + "." + key + ": wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& sub(const char* key) const { return j_.at(key); }

 private:
  const json& j_;
  std::string where_;
};

}  // namespace

std::vector<int> RunConfig::effective_holdout() const {
  if (!corpus.holdout_domains.empty()) return corpus.holdout_domains;
  if (!corpus.files.empty()) return {};  // explicit corpora: train on all
  return {corpus.gen.domains};  // last generated domain id
}

void RunConfig::validate() const {
  corpus.gen.validate();
  encoder.validate();
  if (sparsity.keep_fraction <= 0.0 || sparsity.keep_fraction > 1.0) {
    raise(ErrorCode::config, "sparsity.keep_fraction outside (0,1]");
  }
  if (sampler.hops < 0 || sampler.max_nodes < 1) {
    raise(ErrorCode::config, "sampler: hops must be >= 0, max_nodes >= 1");
  }
  if (training.batch_size < 2 || training.steps < 0) {
    raise(ErrorCode::config, "training: batch_size >= 2 and steps >= 0 required");
  }
  if (!(training.tau > 0.0)) raise(ErrorCode::config, "training.tau must be > 0");
  if (!(training.lr > 0.0)) raise(ErrorCode::config, "training.lr must be > 0");
  if (training.weight_decay < 0.0) raise(ErrorCode::config, "training.weight_decay < 0");
  if (scrb.gamma < 0.0) raise(ErrorCode::config, "scrb.gamma must be >= 0");
  if (!(scrb.epsilon > 0.0)) raise(ErrorCode::config, "scrb.epsilon must be > 0");
  if (scrb.lambda_d < 0.0 || scrb.lambda_a < 0.0 || scrb.lambda_c < 0.0) {
    raise(ErrorCode::config, "scrb lambdas must be >= 0");
  }
  if (objective.alpha < 0.0 || objective.mu < 0.0 || objective.nu < 0.0) {
    raise(ErrorCode::config, "objective coefficients must be >= 0");
  }
  if (eval.score_map != "affine" && eval.score_map != "raw") {
    raise(ErrorCode::config, "eval.score_map must be 'affine' or 'raw'");
  }
  if (eval.seeds.empty()) raise(ErrorCode::config, "eval.seeds must not be empty");
  if (verify.domains < 2) raise(ErrorCode::config, "verify.domains must be >= 2");
  if (verify.d_inv < 1 || verify.d_spu < 1) {
    raise(ErrorCode::config, "verify dims must be >= 1");
  }
  if (verify.tol_rel < 0.0) raise(ErrorCode::config, "verify.tol_rel must be >= 0");
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  Fields top(j, "config",
             {"seed", "max_summary_tokens", "corpus", "sparsity", "sampler",
              "encoder", "training", "scrb", "objective", "ablation", "eval",
              "verify"});
  top.get("seed", cfg.seed);
  top.get("max_summary_tokens", cfg.max_summary_tokens);

  if (top.has("corpus")) {
    Fields f(top.sub("corpus"), "corpus", {"files", "holdout_domains", "generate"});
    f.get("files", cfg.corpus.files);
    f.get("holdout_domains", cfg.corpus.holdout_domains);
    if (f.has("generate")) {
      Fields g(f.sub("generate"), "corpus.generate",
               {"domains", "nodes_per_domain", "classes", "p_intra", "p_inter",
                "vocab_size", "tokens_per_node", "domain_shift",
                "signature_rate", "intra_class_slope"});
      auto& gen = cfg.corpus.gen;
      g.get("domains", gen.domains);
      g.get("nodes_per_domain", gen.nodes_per_domain);
      g.get("classes", gen.classes);
      g.get("p_intra", gen.p_intra);
      g.get("p_inter", gen.p_inter);
      g.get("vocab_size", gen.vocab_size);
      g.get("tokens_per_node", gen.tokens_per_node);
      g.get("domain_shift", gen.domain_shift);
      g.get("signature_rate", gen.signature_rate);
      g.get("intra_class_slope", gen.intra_class_slope);
    }
  }
  if (top.has("sparsity")) {
    Fields f(top.sub("sparsity"), "sparsity", {"keep_fraction", "at_generate"});
    f.get("keep_fraction", cfg.sparsity.keep_fraction);
    f.get("at_generate", cfg.sparsity.at_generate);
  }
  if (top.has("sampler")) {
    Fields f(top.sub("sampler"), "sampler", {"hops", "max_nodes"});
    f.get("hops", cfg.sampler.hops);
    f.get("max_nodes", cfg.sampler.max_nodes);
  }
  if (top.has("encoder")) {
    Fields f(top.sub("encoder"), "encoder",
             {"hidden_dim", "embed_dim", "mp_layers", "hash_dim"});
    f.get("hidden_dim", cfg.encoder.hidden_dim);
    f.get("embed_dim", cfg.encoder.embed_dim);
    f.get("mp_layers", cfg.encoder.mp_layers);
    f.get("hash_dim", cfg.encoder.hash_dim);
  }
  if (top.has("training")) {
    Fields f(top.sub("training"), "training",
             {"batch_size", "steps", "lr", "weight_decay", "tau"});
    f.get("batch_size", cfg.training.batch_size);
    f.get("steps", cfg.training.steps);
    f.get("lr", cfg.training.lr);
    f.get("weight_decay", cfg.training.weight_decay);
    f.get("tau", cfg.training.tau);
  }
  if (top.has("scrb")) {
    Fields f(top.sub("scrb"), "scrb",
             {"gamma", "epsilon", "lambda_d", "lambda_a", "lambda_c"});
    f.get("gamma", cfg.scrb.gamma);
    f.get("epsilon", cfg.scrb.epsilon);
    f.get("lambda_d", cfg.scrb.lambda_d);
    f.get("lambda_a", cfg.scrb.lambda_a);
    f.get("lambda_c", cfg.scrb.lambda_c);
  }
  if (top.has("objective")) {
    Fields f(top.sub("objective"), "objective", {"alpha", "mu", "nu"});
    f.get("alpha", cfg.objective.alpha);
    f.get("mu", cfg.objective.mu);
    f.get("nu", cfg.objective.nu);
  }
  if (top.has("ablation")) {
    Fields f(top.sub("ablation"), "ablation",
             {"disable_enhance", "uniform_weights"});
    f.get("disable_enhance", cfg.ablation.disable_enhance);
    f.get("uniform_weights", cfg.ablation.uniform_weights);
  }
  if (top.has("eval")) {
    Fields f(top.sub("eval"), "eval",
             {"tasks", "seeds", "ks", "score_map", "max_nodes", "max_edges",
              "prompts_file"});
    f.get("tasks", cfg.eval.tasks);
    f.get("seeds", cfg.eval.seeds);
    f.get("ks", cfg.eval.ks);
    f.get("score_map", cfg.eval.score_map);
    f.get("max_nodes", cfg.eval.max_nodes);
    f.get("max_edges", cfg.eval.max_edges);
    f.get("prompts_file", cfg.eval.prompts_file);
  }
  if (top.has("verify")) {
    Fields f(top.sub("verify"), "verify",
             {"domains", "d_inv", "d_spu", "mc_samples", "tol_rel", "violation"});
    f.get("domains", cfg.verify.domains);
    f.get("d_inv", cfg.verify.d_inv);
    f.get("d_spu", cfg.verify.d_spu);
    f.get("mc_samples", cfg.verify.mc_samples);
    f.get("tol_rel", cfg.verify.tol_rel);
    f.get("violation", cfg.verify.violation);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::io, "cannot open config " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::config, "config " + path + ": invalid JSON");
  return from_json(j);
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["max_summary_tokens"] = max_summary_tokens;
  j["corpus"] = {
      {"generate",
       {{"domains", corpus.gen.domains},
        {"nodes_per_domain", corpus.gen.nodes_per_domain},
        {"classes", corpus.gen.classes},
        {"p_intra", corpus.gen.p_intra},
        {"p_inter", corpus.gen.p_inter},
        {"vocab_size", corpus.gen.vocab_size},
        {"tokens_per_node", corpus.gen.tokens_per_node},
        {"domain_shift", corpus.gen.domain_shift},
        {"signature_rate", corpus.gen.signature_rate},
        {"intra_class_slope", corpus.gen.intra_class_slope}}},
      {"files", corpus.files},
      {"holdout_domains", corpus.holdout_domains}};
  j["sparsity"] = {{"keep_fraction", sparsity.keep_fraction},
                   {"at_generate", sparsity.at_generate}};
  j["sampler"] = {{"hops", sampler.hops}, {"max_nodes", sampler.max_nodes}};
  j["encoder"] = {{"hidden_dim", encoder.hidden_dim},
                  {"embed_dim", encoder.embed_dim},
                  {"mp_layers", encoder.mp_layers},
                  {"hash_dim", encoder.hash_dim}};
  j["training"] = {{"batch_size", training.batch_size},
                   {"steps", training.steps},
                   {"lr", training.lr},
                   {"weight_decay", training.weight_decay},
                   {"tau", training.tau}};
  j["scrb"] = {{"gamma", scrb.gamma},
               {"epsilon", scrb.epsilon},
               {"lambda_d", scrb.lambda_d},
               {"lambda_a", scrb.lambda_a},
               {"lambda_c", scrb.lambda_c}};
  j["objective"] = {{"alpha", objective.alpha},
                    {"mu", objective.mu},
                    {"nu", objective.nu}};
  j["ablation"] = {{"disable_enhance", ablation.disable_enhance},
                   {"uniform_weights", ablation.uniform_weights}};
  j["eval"] = {{"tasks", eval.tasks},       {"seeds", eval.seeds},
               {"ks", eval.ks},             {"score_map", eval.score_map},
               {"max_nodes", eval.max_nodes}, {"max_edges", eval.max_edges},
               {"prompts_file", eval.prompts_file}};
  j["verify"] = {{"domains", verify.domains},
                 {"d_inv", verify.d_inv},
                 {"d_spu", verify.d_spu},
                 {"mc_samples", verify.mc_samples},
                 {"tol_rel", verify.tol_rel},
                 {"violation", verify.violation}};
  return j;
}

}  // namespace s2align::config
