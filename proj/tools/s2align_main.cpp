// Command-line harness over the s2align C API.
//
// Subcommands: generate, train, eval, verify, ablate, report.
// Exit codes: 0 success, 1 failed verification/acceptance, 2 config error,
// 3 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "s2align/s2align.h"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFailedCheck = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

int exit_code_for(s2al_status status) {
  switch (status) {
    case S2AL_OK:
      return kExitOk;
    case S2AL_ERR_CONFIG:
    case S2AL_ERR_INVALID_ARGUMENT:
      return kExitConfig;
    case S2AL_ERR_IO:
    case S2AL_ERR_PARSE:
    case S2AL_ERR_VALIDATION:
    case S2AL_ERR_CHECKPOINT:
      return kExitIo;
    default:
      return kExitFailedCheck;
  }
}

struct CString {
  char* ptr = nullptr;
  ~CString() { s2al_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

struct CorpusHandle {
  s2al_corpus* ptr = nullptr;
  ~CorpusHandle() { s2al_corpus_free(ptr); }
};

struct ModelHandle {
  s2al_model* ptr = nullptr;
  ~ModelHandle() { s2al_model_free(ptr); }
};

int fail(s2al_status status, const CString& err) {
  std::cerr << "error: " << (err.ptr ? err.ptr : "unknown") << "\n";
  return exit_code_for(status);
}

std::string read_file(const std::string& path, bool& ok) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    ok = false;
    return "";
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  ok = true;
  return buf.str();
}

bool write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return false;
  out << content;
  return static_cast<bool>(out);
}

// Loads the config file (or "{}" when absent) and applies the --seed override.
std::string resolve_config(const std::string& config_path, long long seed,
                           bool seed_set, int& error_exit) {
  nlohmann::json j = nlohmann::json::object();
  if (!config_path.empty()) {
    bool ok = false;
    const std::string text = read_file(config_path, ok);
    if (!ok) {
      std::cerr << "error: cannot open config " << config_path << "\n";
      error_exit = kExitIo;
      return "";
    }
    j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      std::cerr << "error: config " << config_path << " is not a JSON object\n";
      error_exit = kExitConfig;
      return "";
    }
  }
  if (seed_set) j["seed"] = seed;
  return j.dump();
}

std::vector<std::string> corpus_files_from_manifest(const std::string& dir,
                                                    bool& ok) {
  // The manifest lists the corpus files; fall back to globbing *.jsonl.
  std::vector<std::string> files;
  ok = true;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".jsonl") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) ok = false;
  return files;
}

int cmd_generate(const std::string& config, const std::string& out_dir,
                 bool quiet) {
  CString err;
  CorpusHandle corpus;
  s2al_status status = s2al_corpus_generate(config.c_str(), &corpus.ptr, &err.ptr);
  if (status != S2AL_OK) return fail(status, err);
  CString manifest;
  status = s2al_corpus_save(corpus.ptr, config.c_str(), out_dir.c_str(),
                            &manifest.ptr, &err.ptr);
  if (status != S2AL_OK) return fail(status, err);
  if (!quiet) {
    CString table;
    if (s2al_render_table(manifest.ptr, &table.ptr, nullptr) == S2AL_OK) {
      std::cout << table.str();
    }
    std::cout << "corpus written to " << out_dir << "\n";
  }
  return kExitOk;
}

int load_dir_or_files(const std::vector<std::string>& inputs,
                      CorpusHandle& corpus, CString& err, s2al_status& status) {
  std::vector<std::string> files;
  for (const auto& input : inputs) {
    if (fs::is_directory(input)) {
      bool ok = false;
      auto found = corpus_files_from_manifest(input, ok);
      if (!ok) {
        std::cerr << "error: no .jsonl corpus files under " << input << "\n";
        return kExitIo;
      }
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(input);
    }
  }
  std::vector<const char*> cfiles;
  for (const auto& f : files) cfiles.push_back(f.c_str());
  status = s2al_corpus_load(cfiles.data(), cfiles.size(), &corpus.ptr, &err.ptr);
  if (status != S2AL_OK) return fail(status, err);
  return kExitOk;
}

int cmd_train(const std::string& config, const std::vector<std::string>& inputs,
              const std::string& out_dir, bool quiet) {
  CString err;
  CorpusHandle corpus;
  s2al_status status = S2AL_OK;
  int rc = load_dir_or_files(inputs, corpus, err, status);
  if (rc != kExitOk) return rc;
  ModelHandle model;
  status = s2al_train(config.c_str(), corpus.ptr, out_dir.c_str(), &model.ptr,
                      &err.ptr);
  if (status != S2AL_OK) return fail(status, err);
  if (!quiet) {
    std::cout << "checkpoint written to "
              << (fs::path(out_dir) / "checkpoint.json").string() << "\n";
  }
  return kExitOk;
}

// When the config names no prompt file, look for prompts.json next to the
// target corpus.
std::string with_discovered_prompts(const std::string& config,
                                    const std::vector<std::string>& inputs) {
  nlohmann::json j = nlohmann::json::parse(config, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return config;
  if (j.contains("eval") && j["eval"].contains("prompts_file") &&
      !j["eval"]["prompts_file"].get<std::string>().empty()) {
    return config;
  }
  for (const auto& input : inputs) {
    const fs::path dir =
        fs::is_directory(input) ? fs::path(input) : fs::path(input).parent_path();
    const fs::path candidate = dir / "prompts.json";
    if (fs::exists(candidate)) {
      j["eval"]["prompts_file"] = candidate.string();
      return j.dump();
    }
  }
  return config;
}

int cmd_eval(const std::string& config, const std::string& checkpoint,
             const std::vector<std::string>& inputs, const std::string& out_dir,
             bool quiet) {
  CString err;
  ModelHandle model;
  s2al_status status = s2al_model_load(checkpoint.c_str(), &model.ptr, &err.ptr);
  if (status != S2AL_OK) return fail(status, err);
  CorpusHandle targets;
  int rc = load_dir_or_files(inputs, targets, err, status);
  if (rc != kExitOk) return rc;
  const std::string resolved = with_discovered_prompts(config, inputs);
  CString report;
  status = s2al_evaluate(model.ptr, targets.ptr, resolved.c_str(), &report.ptr,
                         &err.ptr);
  if (status != S2AL_OK) return fail(status, err);
  fs::create_directories(out_dir);
  const auto report_path = (fs::path(out_dir) / "eval_report.json").string();
  if (!write_file(report_path, report.str() + "\n")) {
    std::cerr << "error: cannot write " << report_path << "\n";
    return kExitIo;
  }
  CString table;
  if (s2al_render_table(report.ptr, &table.ptr, nullptr) == S2AL_OK) {
    write_file((fs::path(out_dir) / "eval_report.txt").string(), table.str());
    if (!quiet) std::cout << table.str();
  }
  return kExitOk;
}

int cmd_verify(const std::string& config, const std::string& out_dir,
               bool quiet) {
  CString err, report;
  int all_passed = 0;
  s2al_status status =
      s2al_verify(config.c_str(), &report.ptr, &all_passed, &err.ptr);
  if (status != S2AL_OK) return fail(status, err);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const auto path = (fs::path(out_dir) / "verify_report.json").string();
    if (!write_file(path, report.str() + "\n")) {
      std::cerr << "error: cannot write " << path << "\n";
      return kExitIo;
    }
  }
  CString table;
  if (s2al_render_table(report.ptr, &table.ptr, nullptr) == S2AL_OK && !quiet) {
    std::cout << table.str();
  }
  return all_passed ? kExitOk : kExitFailedCheck;
}

int cmd_ablate(const std::string& config, const std::vector<std::string>& inputs,
               const std::string& out_dir, bool quiet) {
  CString err;
  CorpusHandle corpus;
  s2al_status status = S2AL_OK;
  if (inputs.empty()) {
    status = s2al_corpus_generate(config.c_str(), &corpus.ptr, &err.ptr);
    if (status != S2AL_OK) return fail(status, err);
  } else {
    int rc = load_dir_or_files(inputs, corpus, err, status);
    if (rc != kExitOk) return rc;
  }
  CString report;
  status = s2al_ablate(config.c_str(), corpus.ptr, &report.ptr, &err.ptr);
  if (status != S2AL_OK) return fail(status, err);
  fs::create_directories(out_dir);
  const auto path = (fs::path(out_dir) / "ablate_report.json").string();
  if (!write_file(path, report.str() + "\n")) {
    std::cerr << "error: cannot write " << path << "\n";
    return kExitIo;
  }
  CString table;
  if (s2al_render_table(report.ptr, &table.ptr, nullptr) == S2AL_OK) {
    write_file((fs::path(out_dir) / "ablate_report.txt").string(), table.str());
    if (!quiet) std::cout << table.str();
  }
  return kExitOk;
}

int cmd_report(const std::string& report_path) {
  bool ok = false;
  const std::string content = read_file(report_path, ok);
  if (!ok) {
    std::cerr << "error: cannot open " << report_path << "\n";
    return kExitIo;
  }
  CString err, table;
  s2al_status status = s2al_render_table(content.c_str(), &table.ptr, &err.ptr);
  if (status != S2AL_OK) return fail(status, err);
  std::cout << table.str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse graph-text alignment pipeline (version " +
               std::string(s2al_version()) + ")"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  long long seed = 0;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  app.add_flag("--quiet", quiet, "suppress progress output");

  auto* generate = app.add_subcommand("generate", "generate a synthetic corpus");
  std::vector<std::string> train_inputs;
  auto* train = app.add_subcommand("train", "pre-train on a corpus");
  train->add_option("corpus", train_inputs, "corpus directory or TAG-JSONL files")
      ->required();
  std::vector<std::string> eval_inputs;
  std::string checkpoint_path;
  auto* eval = app.add_subcommand("eval", "zero-shot evaluation");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("targets", eval_inputs, "target corpus directory or files")
      ->required();
  auto* verify = app.add_subcommand("verify", "run the theory checks");
  std::vector<std::string> ablate_inputs;
  auto* ablate = app.add_subcommand("ablate", "train and compare objective variants");
  ablate->add_option("corpus", ablate_inputs,
                     "corpus directory or files (omit to generate)");
  std::string report_path;
  auto* report = app.add_subcommand("report", "render a JSON report as a table");
  report->add_option("report", report_path, "report JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  int error_exit = kExitOk;
  const std::string config =
      resolve_config(config_path, seed, seed_opt->count() > 0, error_exit);
  if (error_exit != kExitOk) return error_exit;

  try {
    if (generate->parsed()) return cmd_generate(config, out_dir, quiet);
    if (train->parsed()) return cmd_train(config, train_inputs, out_dir, quiet);
    if (eval->parsed())
      return cmd_eval(config, checkpoint_path, eval_inputs, out_dir, quiet);
    if (verify->parsed()) return cmd_verify(config, out_dir, quiet);
    if (ablate->parsed()) return cmd_ablate(config, ablate_inputs, out_dir, quiet);
    if (report->parsed()) return cmd_report(report_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailedCheck;
  }
  return kExitConfig;
}
