#include "core/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "core/theorylab.hpp"

namespace s2align::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Batch assembly

BatchData make_batch(const std::vector<tag::SparseTag>& train_tags,
                     const config::RunConfig& cfg, std::uint64_t step_seed) {
  if (train_tags.empty()) {
    raise(ErrorCode::invalid_argument, "make_batch: no training tags");
  }
  const std::size_t domains = train_tags.size();
  if (cfg.training.batch_size % domains != 0) {
    raise(ErrorCode::config, "batch_size must be divisible by the number of "
                             "training domains");
  }
  const std::size_t per_domain = cfg.training.batch_size / domains;

  BatchData batch;
  for (std::size_t t = 0; t < domains; ++t) {
    const auto& tag = train_tags[t];
    Rng rng(derive_seed(step_seed, "batch_centers", tag.domain_id));
    if (per_domain > tag.nodes.size()) {
      raise(ErrorCode::config, "batch quota exceeds nodes in domain " +
                                   std::to_string(tag.domain_id));
    }
    const auto centers =
        rng.sample_without_replacement(tag.nodes.size(), per_domain);
    for (auto c : centers) {
      BatchItem item;
      item.sample = tag::make_sample(
          tag, static_cast<int>(c), cfg.sampler,
          derive_seed(step_seed, "sample", tag.domain_id, c),
          cfg.max_summary_tokens);
      item.ppr = tag::ppr_distribution(item.sample.subgraph);
      item.stability = scrb::structural_stability(item.ppr, item.sample.subgraph.size());
      item.coverage = scrb::text_coverage(tag, item.sample.subgraph);
      item.tag_index = static_cast<int>(t);
      batch.items.push_back(std::move(item));
      batch.domain_ids.push_back(tag.domain_id);
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Combined objective

LossBundle batch_losses(ad::Tape& tape, const ad::BoundParams& params,
                        const std::vector<tag::SparseTag>& train_tags,
                        const BatchData& batch, const config::RunConfig& cfg,
                        const DetachedContext* frozen) {
  const std::size_t n = batch.items.size();
  if (n == 0) raise(ErrorCode::invalid_argument, "batch_losses: empty batch");

  std::vector<ad::Var> z_g_c(n), z_g_s(n), z_t_c(n), z_t_s(n), z_hat(n);
  for (std::size_t i = 0; i < n; ++i) {
    const BatchItem& item = batch.items[i];
    const tag::SparseTag& src = train_tags[item.tag_index];
    auto graph = enc::graph_forward(tape, params, cfg.encoder, src,
                                    item.sample.subgraph);
    auto text = enc::text_forward(
        tape, params, cfg.encoder,
        enc::hash_embed(item.sample.semantic_summary, cfg.encoder.hash_dim),
        enc::hash_embed(item.sample.structure_description, cfg.encoder.hash_dim));
    z_g_c[i] = graph.content;
    z_g_s[i] = graph.structure;
    z_t_c[i] = text.content;
    z_t_s[i] = text.structure;
    z_hat[i] = align::reconstruct_structure(params, z_t_s[i]);
  }

  LossBundle bundle;
  DetachedContext& ctx = bundle.detached;
  if (frozen) {
    ctx = *frozen;
  } else {
    ctx.recon_targets.resize(n);
    ctx.density_keys.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      ctx.recon_targets[i] = z_g_s[i].value();
      ctx.density_keys[i] = z_g_s[i].value();
    }
  }

  bundle.rec = align::recon_loss(tape, z_hat, ctx.recon_targets);

  std::vector<ad::Var> z_t_enh(n);
  bundle.kappa.resize(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (cfg.ablation.disable_enhance) {
      z_t_enh[i] = z_t_c[i];
    } else {
      z_t_enh[i] = align::enhance_text(tape, z_t_c[i], z_hat[i],
                                       ctx.recon_targets[i]);
      bundle.kappa[i] =
          align::consistency_gate(z_hat[i].value(), ctx.recon_targets[i]);
    }
  }

  bundle.per_sample = align::per_sample_losses(z_g_c, z_t_enh, cfg.training.tau);
  bundle.den = scrb::density_loss(tape, params, ctx.density_keys, batch.domain_ids);

  if (!frozen) {
    ctx.ratios.resize(n);
    ctx.consistency.resize(n);
    ctx.reliability.resize(n);
    const auto& mu0 = params[enc::density_mean_name(-1)].value();
    const auto& lv0 = params[enc::density_logvar_name(-1)].value();
    for (std::size_t i = 0; i < n; ++i) {
      const int e = batch.domain_ids[i];
      ctx.ratios[i] = scrb::density_ratio(
          mu0, lv0, params[enc::density_mean_name(e)].value(),
          params[enc::density_logvar_name(e)].value(), ctx.density_keys[i],
          cfg.scrb.gamma, cfg.scrb.epsilon);
      ctx.consistency[i] =
          scrb::consistency_score(z_g_c[i].value(), z_t_c[i].value());
      ctx.reliability[i] =
          scrb::reliability(batch.items[i].stability, batch.items[i].coverage,
                            ctx.consistency[i], cfg.scrb);
    }
    if (cfg.ablation.uniform_weights) {
      ctx.weights.assign(n, 1.0);
    } else {
      auto result = scrb::sample_weights(ctx.ratios, ctx.reliability,
                                         batch.domain_ids);
      ctx.weights = std::move(result.weights);
      ctx.weight_fallback = result.fallback_used;
    }
  }

  bundle.align = align::weighted_align_loss(bundle.per_sample, ctx.weights);
  bundle.risks = scrb::domain_risks(bundle.per_sample, ctx.weights,
                                    batch.domain_ids);
  bundle.risk = scrb::risk_balance_loss(bundle.risks);
  bundle.total = scrb::total_loss(bundle.align, bundle.rec, bundle.risk,
                                  bundle.den, cfg.objective.alpha,
                                  cfg.objective.mu, cfg.objective.nu);
  return bundle;
}

ad::LossFn frozen_loss_fn(const std::vector<tag::SparseTag>& train_tags,
                          const BatchData& batch, const config::RunConfig& cfg,
                          const ad::Params& at_params,
                          const std::string& component) {
  // Capture the detached context at the reference parameters.
  auto frozen = std::make_shared<DetachedContext>();
  {
    ad::Tape tape;
    ad::BoundParams bound(tape, at_params, /*requires_grad=*/false);
    LossBundle bundle = batch_losses(tape, bound, train_tags, batch, cfg, nullptr);
    *frozen = bundle.detached;
  }
  return [&train_tags, &batch, cfg, frozen, component](
             ad::Tape& tape, const ad::BoundParams& bound) -> ad::Var {
    LossBundle bundle =
        batch_losses(tape, bound, train_tags, batch, cfg, frozen.get());
    if (component == "align") return bundle.align;
    if (component == "rec") return bundle.rec;
    if (component == "risk") return bundle.risk;
    if (component == "den") return bundle.den;
    if (component == "total") return bundle.total;
    if (component == "sample0") return bundle.per_sample[0];
    raise(ErrorCode::invalid_argument, "frozen_loss_fn: bad component " + component);
  };
}

// ---------------------------------------------------------------------------
// Training

void split_corpus(const std::vector<tag::SparseTag>& corpus,
                  const std::vector<int>& holdout,
                  std::vector<tag::SparseTag>& train_tags,
                  std::vector<tag::SparseTag>& holdout_tags) {
  const std::set<int> held(holdout.begin(), holdout.end());
  for (const auto& tag : corpus) {
    if (held.count(tag.domain_id)) {
      holdout_tags.push_back(tag);
    } else {
      train_tags.push_back(tag);
    }
  }
}

namespace {

void check_finite(const char* name, double v) {
  if (!std::isfinite(v)) {
    raise(ErrorCode::non_finite_loss,
          std::string("non-finite loss component ") + name + " = " +
              std::to_string(v));
  }
}

}  // namespace

TrainResult train(const std::vector<tag::SparseTag>& corpus,
                  const config::RunConfig& cfg, std::ostream* train_log,
                  std::ostream* scrb_log) {
  cfg.validate();
  std::vector<tag::SparseTag> train_tags, holdout_tags;
  split_corpus(corpus, cfg.effective_holdout(), train_tags, holdout_tags);
  if (train_tags.empty()) {
    raise(ErrorCode::config, "train: no training domains after holdout split");
  }
  if (cfg.training.batch_size % train_tags.size() != 0 ||
      cfg.training.batch_size / train_tags.size() < 2) {
    raise(ErrorCode::config,
          "train: batch_size must give every training domain >= 2 samples");
  }

  // Sparsify training text; holdout tags keep full text for evaluation.
  for (auto& tag : train_tags) {
    tag = tag::sparsify_text(tag, cfg.sparsity.keep_fraction,
                             derive_seed(cfg.seed, "train_sparsify"));
    if (tag.text_free()) {
      raise(ErrorCode::validation,
            "train: domain " + std::to_string(tag.domain_id) +
                " has no text after sparsification; rejected for training");
    }
  }

  TrainResult result;
  for (const auto& tag : train_tags) result.train_domain_ids.push_back(tag.domain_id);
  result.params = enc::init_params(cfg.encoder, result.train_domain_ids,
                                   derive_seed(cfg.seed, "params"));

  ad::AdamWConfig opt;
  opt.lr = cfg.training.lr;
  opt.weight_decay = cfg.training.weight_decay;
  ad::AdamWState opt_state;

  for (int step = 1; step <= cfg.training.steps; ++step) {
    const BatchData batch =
        make_batch(train_tags, cfg, derive_seed(cfg.seed, "step", step));

    ad::Tape tape;
    ad::BoundParams bound(tape, result.params, /*requires_grad=*/true);
    LossBundle bundle =
        batch_losses(tape, bound, train_tags, batch, cfg, nullptr);

    StepLog log;
    log.step = step;
    log.align = bundle.align.scalar();
    log.rec = bundle.rec.scalar();
    log.risk = bundle.risk.scalar();
    log.den = bundle.den.scalar();
    log.total = bundle.total.scalar();
    check_finite("L_align", log.align);
    check_finite("L_rec", log.rec);
    check_finite("L_risk", log.risk);
    check_finite("L_den", log.den);
    check_finite("L_total", log.total);

    tape.backward(bundle.total);
    std::map<std::string, std::vector<double>> grads;
    for (const auto& [name, var] : bound.vars()) grads[name] = tape.grad(var);
    ad::adamw_step(result.params, grads, opt, opt_state);

    // Keep the density models in a numerically safe band.
    for (auto& [name, arr] : result.params.entries()) {
      if (name.find(".logvar") != std::string::npos) {
        for (auto& v : arr.data) v = std::clamp(v, -10.0, 10.0);
      }
    }

    result.log.push_back(log);
    if (train_log) {
      json line{{"step", step},        {"l_align", log.align},
                {"l_rec", log.rec},    {"l_risk", log.risk},
                {"l_den", log.den},    {"l_total", log.total}};
      (*train_log) << line.dump() << "\n";
    }
    if (scrb_log) {
      json per_domain = json::object();
      for (std::size_t k = 0; k < bundle.risks.domains.size(); ++k) {
        const int e = bundle.risks.domains[k];
        double sum_r = 0.0, sum_rho = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < batch.items.size(); ++i) {
          if (batch.domain_ids[i] != e) continue;
          sum_r += bundle.detached.ratios.empty() ? 1.0 : bundle.detached.ratios[i];
          sum_rho += bundle.detached.reliability.empty()
                         ? 1.0
                         : bundle.detached.reliability[i];
          ++count;
        }
        per_domain[std::to_string(e)] = {
            {"count", count},
            {"mean_r", count ? sum_r / count : 0.0},
            {"mean_rho", count ? sum_rho / count : 0.0},
            {"risk", bundle.risks.risks[k].scalar()}};
      }
      json line{{"step", step},
                {"per_domain", per_domain},
                {"l_risk", log.risk},
                {"l_den", log.den}};
      (*scrb_log) << line.dump() << "\n";
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const ad::Params& params, const config::RunConfig& cfg,
                     const std::vector<int>& train_domain_ids,
                     const std::string& path) {
  json j;
  j["kind"] = "checkpoint";
  j["version"] = 1;
  j["config"] = cfg.to_json();
  j["train_domain_ids"] = train_domain_ids;
  json p = json::object();
  for (const auto& [name, arr] : params.entries()) {
    p[name] = {{"shape", arr.shape}, {"data", arr.data}};
  }
  j["params"] = std::move(p);
  write_text_file(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  json j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("kind", "") != "checkpoint") {
    raise(ErrorCode::checkpoint, "not a checkpoint file: " + path);
  }
  if (j.value("version", 0) != 1) {
    raise(ErrorCode::checkpoint, "unsupported checkpoint version in " + path);
  }
  Checkpoint ckpt;
  try {
    ckpt.cfg = config::RunConfig::from_json(j.at("config"));
    ckpt.train_domain_ids = j.at("train_domain_ids").get<std::vector<int>>();
    for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it) {
      ckpt.params.add(it.key(), it.value().at("shape").get<ad::Shape>(),
                      it.value().at("data").get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::checkpoint, "malformed checkpoint " + path + ": " + e.what());
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Corpus I/O

Corpus generate_corpus(const config::RunConfig& cfg) {
  Corpus corpus;
  corpus.tags = tag::generate_synthetic_corpus(cfg.corpus.gen, cfg.seed);
  corpus.gen = cfg.corpus.gen;
  if (cfg.sparsity.at_generate) {
    for (auto& t : corpus.tags) {
      t = tag::sparsify_text(t, cfg.sparsity.keep_fraction,
                             derive_seed(cfg.seed, "generate_sparsify"));
    }
  }
  return corpus;
}

Corpus load_corpus(const std::vector<std::string>& paths) {
  if (paths.empty()) raise(ErrorCode::invalid_argument, "load_corpus: no files");
  Corpus corpus;
  for (const auto& path : paths) corpus.tags.push_back(tag::load_tag(path));
  return corpus;
}

json save_corpus(const Corpus& corpus, const config::RunConfig& cfg,
                 const std::string& out_dir) {
  fs::create_directories(out_dir);
  json manifest;
  manifest["kind"] = "corpus_manifest";
  manifest["config"] = cfg.to_json();
  json files = json::array();
  for (const auto& t : corpus.tags) {
    const std::string filename = "domain_" + std::to_string(t.domain_id) + ".jsonl";
    tag::save_tag(t, (fs::path(out_dir) / filename).string());
    files.push_back({{"path", filename},
                     {"domain_id", t.domain_id},
                     {"name", t.name},
                     {"nodes", t.nodes.size()},
                     {"edges", t.edges.size()},
                     {"texted", t.text_count()}});
  }
  manifest["files"] = std::move(files);
  if (corpus.gen) {
    const auto prompts = tag::default_label_prompts(*corpus.gen);
    json pj = json::object();
    for (std::size_t c = 0; c < prompts.size(); ++c) {
      pj[std::to_string(c)] = prompts[c];
    }
    write_text_file((fs::path(out_dir) / "prompts.json").string(),
                    pj.dump(2) + "\n");
    manifest["prompts_file"] = "prompts.json";
  }
  write_text_file((fs::path(out_dir) / "manifest.json").string(),
                  manifest.dump(2) + "\n");
  return manifest;
}

evalzero::LabelPromptSet prompts_from_json(const json& j) {
  if (!j.is_object()) {
    raise(ErrorCode::parse, "prompts: expected an object {class_index: prompt}");
  }
  evalzero::LabelPromptSet set;
  for (auto it = j.begin(); it != j.end(); ++it) {
    int cls = 0;
    try {
      cls = std::stoi(it.key());
    } catch (...) {
      raise(ErrorCode::parse, "prompts: non-integer class key '" + it.key() + "'");
    }
    if (!it.value().is_string()) {
      raise(ErrorCode::parse, "prompts: value for class " + it.key() +
                                  " is not a string");
    }
    set.prompts.emplace_back(cls, it.value().get<std::string>());
  }
  std::sort(set.prompts.begin(), set.prompts.end());
  set.validate();
  return set;
}

evalzero::LabelPromptSet prompts_from_file(const std::string& path) {
  json j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::parse, "prompts " + path + ": invalid JSON");
  return prompts_from_json(j);
}

evalzero::LabelPromptSet default_prompts(const tag::GenConfig& gen) {
  evalzero::LabelPromptSet set;
  const auto prompts = tag::default_label_prompts(gen);
  for (std::size_t c = 0; c < prompts.size(); ++c) {
    set.prompts.emplace_back(static_cast<int>(c), prompts[c]);
  }
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// Drivers

namespace {

evalzero::EvalOptions eval_options(const config::RunConfig& cfg) {
  evalzero::EvalOptions opt;
  opt.tasks = cfg.eval.tasks;
  opt.seeds = cfg.eval.seeds;
  opt.ks = cfg.eval.ks;
  opt.sampler = cfg.sampler;
  opt.max_summary_tokens = cfg.max_summary_tokens;
  opt.max_nodes = cfg.eval.max_nodes;
  opt.max_edges = cfg.eval.max_edges;
  opt.score_map = cfg.eval.score_map;
  return opt;
}

json summary_json(const evalzero::MetricSummary& s) {
  return {{"per_seed", s.per_seed}, {"mean", s.mean}, {"std", s.std_dev}};
}

}  // namespace

json run_eval(const Checkpoint& checkpoint,
              const std::vector<tag::SparseTag>& targets,
              const evalzero::LabelPromptSet& prompts,
              const config::RunConfig& cfg) {
  const auto reports = evalzero::evaluate_suite(
      checkpoint.params, checkpoint.cfg.encoder, targets, prompts,
      eval_options(cfg));
  json j;
  j["kind"] = "eval_report";
  j["config"] = cfg.to_json();
  j["seeds"] = cfg.eval.seeds;
  json rj = json::array();
  for (const auto& report : reports) {
    json metrics = json::object();
    for (const auto& [name, summary] : report.metrics) {
      metrics[name] = summary_json(summary);
    }
    rj.push_back({{"task", report.task}, {"metrics", metrics}});
  }
  j["reports"] = std::move(rj);
  return j;
}

json run_verify(const config::RunConfig& cfg) {
  const auto& v = cfg.verify;
  theory::DomainFamily family =
      v.violation
          ? theory::build_violating_domains(v.domains, v.d_inv, v.d_spu, cfg.seed)
          : theory::build_synthetic_domains(v.domains, v.d_inv, v.d_spu, cfg.seed);

  // Offset predictor: the conditional loss is constant in z, which keeps the
  // ratio-weighted estimator's tails light; unweighted risks still separate
  // through the z-dependent reliability.
  const std::vector<double> w_star = family.w_star;
  theory::Predictor predictor = [w_star](const std::vector<double>& z) {
    double acc = 1.0;
    for (std::size_t k = 0; k < w_star.size(); ++k) acc += w_star[k] * z[k];
    return acc;
  };
  theory::Reliability rho = [](const std::vector<double>& z) {
    return 0.2 + 0.6 / (1.0 + std::exp(-z[0]));
  };

  const auto eq = theory::verify_equalization(family, predictor, rho,
                                              v.mc_samples, v.tol_rel, cfg.seed);
  const auto spu = theory::verify_spurious_elimination(v.domains, v.d_spu,
                                                       cfg.seed);
  const bool t31_pass = eq.weighted_equal && eq.unweighted_differ;
  const bool margin_pass =
      spu.sufficient_domains && spu.ols_w_spu_norm >= 5.0 * spu.w_spu_norm;
  const bool t1_pass = spu.sufficient_domains && spu.pass && margin_pass;

  json j;
  j["kind"] = "verify_report";
  j["config"] = cfg.to_json();
  j["theorem_3_1"] = {{"risks", eq.weighted_risks},
                      {"unweighted_risks", eq.unweighted_risks},
                      {"gap", eq.weighted_gap},
                      {"unweighted_gap", eq.unweighted_gap},
                      {"n_samples", eq.n_samples},
                      {"tol_rel", eq.tol_rel},
                      {"weighted_equal", eq.weighted_equal},
                      {"unweighted_differ", eq.unweighted_differ},
                      {"pass", t31_pass}};
  j["theorem_1"] = {{"w_spu_norm", spu.w_spu_norm},
                    {"ols_w_spu_norm", spu.ols_w_spu_norm},
                    {"w_inv_err", spu.w_inv_err},
                    {"w_star_norm", spu.w_star_norm},
                    {"sufficient_domains", spu.sufficient_domains},
                    {"ols_margin_pass", margin_pass},
                    {"note", spu.note},
                    {"pass", t1_pass}};
  j["all_pass"] = t31_pass && t1_pass;
  return j;
}

json run_ablate(const Corpus& corpus, const config::RunConfig& cfg) {
  const auto holdout_ids = cfg.effective_holdout();
  std::vector<tag::SparseTag> train_tags, holdout_tags;
  split_corpus(corpus.tags, holdout_ids, train_tags, holdout_tags);
  if (holdout_tags.empty()) {
    raise(ErrorCode::config, "ablate: a holdout domain is required");
  }
  evalzero::LabelPromptSet prompts;
  if (!cfg.eval.prompts_file.empty()) {
    prompts = prompts_from_file(cfg.eval.prompts_file);
  } else if (corpus.gen) {
    prompts = default_prompts(*corpus.gen);
  } else {
    raise(ErrorCode::config, "ablate: no prompts available");
  }

  struct Variant {
    const char* name;
    bool no_recon;
    bool no_scrb;
  };
  const Variant variants[] = {{"full", false, false},
                              {"no_recon", true, false},
                              {"no_scrb", false, true},
                              {"none", true, true}};
  const auto& seeds = cfg.eval.seeds;
  auto opt = eval_options(cfg);

  // One training per (variant, seed); independent, so they run in parallel.
  const std::size_t jobs = 4 * seeds.size();
  std::vector<double> accuracy(jobs, 0.0);
  parallel_for(jobs, [&](std::size_t job) {
    const std::size_t vi = job / seeds.size();
    const std::size_t si = job % seeds.size();
    config::RunConfig vcfg = cfg;
    vcfg.seed = seeds[si];  // same seeds across variants
    if (variants[vi].no_recon) {
      vcfg.objective.alpha = 0.0;
      vcfg.ablation.disable_enhance = true;
    }
    if (variants[vi].no_scrb) {
      vcfg.objective.mu = 0.0;
      vcfg.ablation.uniform_weights = true;
    }
    TrainResult trained = train(corpus.tags, vcfg, nullptr, nullptr);
    double acc = 0.0;
    for (const auto& target : holdout_tags) {
      acc += evalzero::zero_shot_accuracy(trained.params, vcfg.encoder, target,
                                          prompts, opt, seeds[si]);
    }
    accuracy[job] = acc / static_cast<double>(holdout_tags.size());
  });

  // Untrained baseline at the same seeds.
  std::vector<double> baseline(seeds.size(), 0.0);
  parallel_for(seeds.size(), [&](std::size_t si) {
    config::RunConfig vcfg = cfg;
    vcfg.seed = seeds[si];
    std::vector<tag::SparseTag> tr, ho;
    split_corpus(corpus.tags, holdout_ids, tr, ho);
    std::vector<int> ids;
    for (const auto& t : tr) ids.push_back(t.domain_id);
    ad::Params params = enc::init_params(vcfg.encoder, ids,
                                         derive_seed(vcfg.seed, "params"));
    double acc = 0.0;
    for (const auto& target : holdout_tags) {
      acc += evalzero::zero_shot_accuracy(params, vcfg.encoder, target, prompts,
                                          opt, seeds[si]);
    }
    baseline[si] = acc / static_cast<double>(holdout_tags.size());
  });

  auto summarize = [](const std::vector<double>& values) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return std::pair<double, double>(
        mean, std::sqrt(var / static_cast<double>(values.size())));
  };

  json j;
  j["kind"] = "ablate_report";
  j["config"] = cfg.to_json();
  j["seeds"] = seeds;
  json vj = json::array();
  for (std::size_t vi = 0; vi < 4; ++vi) {
    std::vector<double> per_seed(accuracy.begin() + vi * seeds.size(),
                                 accuracy.begin() + (vi + 1) * seeds.size());
    const auto [mean, sd] = summarize(per_seed);
    vj.push_back({{"name", variants[vi].name},
                  {"no_recon", variants[vi].no_recon},
                  {"no_scrb", variants[vi].no_scrb},
                  {"per_seed", per_seed},
                  {"mean", mean},
                  {"std", sd}});
  }
  j["variants"] = std::move(vj);
  const auto [bmean, bsd] = summarize(baseline);
  j["baseline_untrained"] = {{"per_seed", baseline}, {"mean", bmean}, {"std", bsd}};
  return j;
}

// ---------------------------------------------------------------------------
// Tables and files

namespace {

std::string fixed(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

void append_row(std::string& out, const std::vector<std::string>& cells,
                const std::vector<std::size_t>& widths) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out += cells[i];
    if (i + 1 < cells.size()) {
      out.append(widths[i] > cells[i].size() ? widths[i] - cells[i].size() + 2 : 2,
                 ' ');
    }
  }
  out += "\n";
}

std::string table_from_rows(std::vector<std::vector<std::string>> rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i) {
      widths[i] = std::max(widths[i], row[i].size());
    }
  }
  std::string out;
  for (const auto& row : rows) append_row(out, row, widths);
  return out;
}

}  // namespace

std::string render_table(const json& report) {
  const std::string kind = report.value("kind", "");
  std::vector<std::vector<std::string>> rows;
  if (kind == "eval_report") {
    rows.push_back({"task", "metric", "mean", "std", "per_seed"});
    for (const auto& r : report.at("reports")) {
      for (auto it = r.at("metrics").begin(); it != r.at("metrics").end(); ++it) {
        std::string per_seed;
        for (const auto& v : it.value().at("per_seed")) {
          if (!per_seed.empty()) per_seed += " ";
          per_seed += fixed(v.get<double>());
        }
        rows.push_back({r.at("task").get<std::string>(), it.key(),
                        fixed(it.value().at("mean").get<double>()),
                        fixed(it.value().at("std").get<double>()), per_seed});
      }
    }
  } else if (kind == "ablate_report") {
    std::vector<std::string> header{"variant"};
    for (const auto& s : report.at("seeds")) {
      header.push_back("seed" + std::to_string(s.get<std::uint64_t>()));
    }
    header.push_back("mean");
    rows.push_back(header);
    for (const auto& v : report.at("variants")) {
      std::vector<std::string> row{v.at("name").get<std::string>()};
      for (const auto& a : v.at("per_seed")) row.push_back(fixed(a.get<double>()));
      row.push_back(fixed(v.at("mean").get<double>()));
      rows.push_back(row);
    }
  } else if (kind == "verify_report") {
    rows.push_back({"check", "result", "detail"});
    const auto& t31 = report.at("theorem_3_1");
    std::string risks;
    for (const auto& r : t31.at("risks")) {
      if (!risks.empty()) risks += " ";
      risks += fixed(r.get<double>());
    }
    rows.push_back({"weighted_risk_equalization",
                    t31.at("pass").get<bool>() ? "pass" : "FAIL",
                    "risks [" + risks + "] gap " +
                        fixed(t31.at("gap").get<double>()) + " unweighted_gap " +
                        fixed(t31.at("unweighted_gap").get<double>())});
    const auto& t1 = report.at("theorem_1");
    rows.push_back({"spurious_elimination",
                    t1.at("pass").get<bool>() ? "pass" : "FAIL",
                    "w_spu " + fixed(t1.at("w_spu_norm").get<double>()) +
                        " ols_w_spu " +
                        fixed(t1.at("ols_w_spu_norm").get<double>())});
  } else if (kind == "corpus_manifest") {
    rows.push_back({"file", "domain", "nodes", "edges", "texted"});
    for (const auto& f : report.at("files")) {
      rows.push_back({f.at("path").get<std::string>(),
                      std::to_string(f.at("domain_id").get<int>()),
                      std::to_string(f.at("nodes").get<std::size_t>()),
                      std::to_string(f.at("edges").get<std::size_t>()),
                      std::to_string(f.at("texted").get<std::size_t>())});
    }
  } else {
    raise(ErrorCode::invalid_argument,
          "render_table: unsupported report kind '" + kind + "'");
  }
  return table_from_rows(std::move(rows));
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::io, "cannot write " + path);
  out << content;
  if (!out) raise(ErrorCode::io, "write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace s2align::pipeline
