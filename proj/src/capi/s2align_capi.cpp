#include "s2align/s2align.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core/config.hpp"
#include "core/pipeline.hpp"

using nlohmann::json;
using namespace s2align;

struct s2al_corpus {
  pipeline::Corpus corpus;
};

struct s2al_model {
  pipeline::Checkpoint checkpoint;
};

namespace {

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

s2al_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::config:
      return S2AL_ERR_CONFIG;
    case ErrorCode::io:
      return S2AL_ERR_IO;
    case ErrorCode::parse:
      return S2AL_ERR_PARSE;
    case ErrorCode::validation:
    case ErrorCode::not_a_distribution:
    case ErrorCode::zero_vector:
    case ErrorCode::empty_prompt_set:
    case ErrorCode::empty_class:
    case ErrorCode::unknown_domain:
    case ErrorCode::unknown_task:
    case ErrorCode::batch_too_small:
    case ErrorCode::all_zero_weights:
      return S2AL_ERR_VALIDATION;
    case ErrorCode::checkpoint:
      return S2AL_ERR_CHECKPOINT;
    case ErrorCode::non_finite_loss:
      return S2AL_ERR_NON_FINITE;
    case ErrorCode::invalid_argument:
      return S2AL_ERR_INVALID_ARGUMENT;
    default:
      return S2AL_ERR_INTERNAL;
  }
}

template <class Fn>
s2al_status guarded(char** err, Fn&& fn) {
  try {
    fn();
    return S2AL_OK;
  } catch (const Error& e) {
    if (err) *err = dup_string(e.what());
    return status_of(e.code());
  } catch (const std::exception& e) {
    if (err) *err = dup_string(e.what());
    return S2AL_ERR_INTERNAL;
  } catch (...) {
    if (err) *err = dup_string("unknown error");
    return S2AL_ERR_INTERNAL;
  }
}

config::RunConfig parse_config(const char* config_json) {
  if (!config_json) raise(ErrorCode::invalid_argument, "config_json is NULL");
  json j = json::parse(config_json, nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::config, "config: invalid JSON");
  return config::RunConfig::from_json(j);
}

evalzero::LabelPromptSet resolve_prompts(const json& raw_config,
                                         const config::RunConfig& cfg,
                                         const pipeline::Corpus& corpus) {
  if (raw_config.contains("prompts")) {
    return pipeline::prompts_from_json(raw_config.at("prompts"));
  }
  if (!cfg.eval.prompts_file.empty()) {
    return pipeline::prompts_from_file(cfg.eval.prompts_file);
  }
  if (corpus.gen) return pipeline::default_prompts(*corpus.gen);
  raise(ErrorCode::config,
        "no prompts: set eval.prompts_file or pass \"prompts\" inline");
}

}  // namespace

extern "C" {

const char* s2al_version(void) { return "1.0.0"; }

void s2al_string_free(char* ptr) { std::free(ptr); }

s2al_status s2al_corpus_generate(const char* config_json, s2al_corpus** out,
                                 char** err) {
  return guarded(err, [&] {
    if (!out) raise(ErrorCode::invalid_argument, "out is NULL");
    const auto cfg = parse_config(config_json);
    auto handle = std::make_unique<s2al_corpus>();
    handle->corpus = pipeline::generate_corpus(cfg);
    *out = handle.release();
  });
}

s2al_status s2al_corpus_load(const char* const* paths, size_t n_paths,
                             s2al_corpus** out, char** err) {
  return guarded(err, [&] {
    if (!out || !paths) raise(ErrorCode::invalid_argument, "NULL argument");
    std::vector<std::string> files(paths, paths + n_paths);
    auto handle = std::make_unique<s2al_corpus>();
    handle->corpus = pipeline::load_corpus(files);
    *out = handle.release();
  });
}

s2al_status s2al_corpus_save(const s2al_corpus* corpus, const char* config_json,
                             const char* out_dir, char** manifest_json,
                             char** err) {
  return guarded(err, [&] {
    if (!corpus || !out_dir) raise(ErrorCode::invalid_argument, "NULL argument");
    const auto cfg = parse_config(config_json);
    json manifest = pipeline::save_corpus(corpus->corpus, cfg, out_dir);
    if (manifest_json) *manifest_json = dup_string(manifest.dump(2));
  });
}

int s2al_corpus_size(const s2al_corpus* corpus) {
  return corpus ? static_cast<int>(corpus->corpus.tags.size()) : 0;
}

s2al_status s2al_corpus_stats(const s2al_corpus* corpus, char** stats_json,
                              char** err) {
  return guarded(err, [&] {
    if (!corpus || !stats_json) raise(ErrorCode::invalid_argument, "NULL argument");
    json j = json::array();
    for (const auto& tag : corpus->corpus.tags) {
      j.push_back({{"domain_id", tag.domain_id},
                   {"name", tag.name},
                   {"nodes", tag.nodes.size()},
                   {"edges", tag.edges.size()},
                   {"texted", tag.text_count()}});
    }
    *stats_json = dup_string(j.dump(2));
  });
}

s2al_status s2al_corpus_sparsify(s2al_corpus* corpus, double keep_fraction,
                                 unsigned long long seed, char** err) {
  return guarded(err, [&] {
    if (!corpus) raise(ErrorCode::invalid_argument, "corpus is NULL");
    for (auto& tag : corpus->corpus.tags) {
      tag = tag::sparsify_text(tag, keep_fraction, seed);
    }
  });
}

void s2al_corpus_free(s2al_corpus* corpus) { delete corpus; }

s2al_status s2al_train(const char* config_json, const s2al_corpus* corpus,
                       const char* out_dir, s2al_model** out, char** err) {
  return guarded(err, [&] {
    if (!corpus || !out) raise(ErrorCode::invalid_argument, "NULL argument");
    const auto cfg = parse_config(config_json);

    std::ofstream train_log, scrb_log;
    std::ostream* train_stream = nullptr;
    std::ostream* scrb_stream = nullptr;
    if (out_dir) {
      std::filesystem::create_directories(out_dir);
      const auto dir = std::filesystem::path(out_dir);
      train_log.open(dir / "train_log.jsonl", std::ios::binary);
      scrb_log.open(dir / "scrb_metrics.jsonl", std::ios::binary);
      if (!train_log || !scrb_log) {
        raise(ErrorCode::io, std::string("cannot write logs under ") + out_dir);
      }
      train_stream = &train_log;
      scrb_stream = &scrb_log;
      pipeline::write_text_file((dir / "resolved_config.json").string(),
                                cfg.to_json().dump(2) + "\n");
    }

    auto trained = pipeline::train(corpus->corpus.tags, cfg, train_stream,
                                   scrb_stream);
    auto handle = std::make_unique<s2al_model>();
    handle->checkpoint.params = std::move(trained.params);
    handle->checkpoint.cfg = cfg;
    handle->checkpoint.train_domain_ids = trained.train_domain_ids;
    if (out_dir) {
      pipeline::save_checkpoint(
          handle->checkpoint.params, cfg, handle->checkpoint.train_domain_ids,
          (std::filesystem::path(out_dir) / "checkpoint.json").string());
    }
    *out = handle.release();
  });
}

s2al_status s2al_model_save(const s2al_model* model, const char* path,
                            char** err) {
  return guarded(err, [&] {
    if (!model || !path) raise(ErrorCode::invalid_argument, "NULL argument");
    pipeline::save_checkpoint(model->checkpoint.params, model->checkpoint.cfg,
                              model->checkpoint.train_domain_ids, path);
  });
}

s2al_status s2al_model_load(const char* path, s2al_model** out, char** err) {
  return guarded(err, [&] {
    if (!path || !out) raise(ErrorCode::invalid_argument, "NULL argument");
    auto handle = std::make_unique<s2al_model>();
    handle->checkpoint = pipeline::load_checkpoint(path);
    *out = handle.release();
  });
}

s2al_status s2al_evaluate(const s2al_model* model, const s2al_corpus* targets,
                          const char* eval_config_json, char** report_json,
                          char** err) {
  return guarded(err, [&] {
    if (!model || !targets || !report_json) {
      raise(ErrorCode::invalid_argument, "NULL argument");
    }
    json raw = json::object();
    if (eval_config_json) {
      raw = json::parse(eval_config_json, nullptr, false);
      if (raw.is_discarded()) raise(ErrorCode::config, "eval config: invalid JSON");
    }
    json cfg_only = raw;
    cfg_only.erase("prompts");
    const auto cfg = config::RunConfig::from_json(cfg_only);
    const auto prompts = resolve_prompts(raw, cfg, targets->corpus);
    json report =
        pipeline::run_eval(model->checkpoint, targets->corpus.tags, prompts, cfg);
    *report_json = dup_string(report.dump(2));
  });
}

s2al_status s2al_verify(const char* config_json, char** report_json,
                        int* all_passed, char** err) {
  return guarded(err, [&] {
    if (!report_json) raise(ErrorCode::invalid_argument, "report_json is NULL");
    const auto cfg = config_json ? parse_config(config_json) : config::RunConfig{};
    json report = pipeline::run_verify(cfg);
    if (all_passed) *all_passed = report.at("all_pass").get<bool>() ? 1 : 0;
    *report_json = dup_string(report.dump(2));
  });
}

s2al_status s2al_ablate(const char* config_json, const s2al_corpus* corpus,
                        char** report_json, char** err) {
  return guarded(err, [&] {
    if (!corpus || !report_json) raise(ErrorCode::invalid_argument, "NULL argument");
    const auto cfg = parse_config(config_json);
    json report = pipeline::run_ablate(corpus->corpus, cfg);
    *report_json = dup_string(report.dump(2));
  });
}

s2al_status s2al_render_table(const char* report_json, char** table,
                              char** err) {
  return guarded(err, [&] {
    if (!report_json || !table) raise(ErrorCode::invalid_argument, "NULL argument");
    json j = json::parse(report_json, nullptr, false);
    if (j.is_discarded()) raise(ErrorCode::parse, "report: invalid JSON");
    *table = dup_string(pipeline::render_table(j));
  });
}

void s2al_model_free(s2al_model* model) { delete model; }

}  // extern "C"
