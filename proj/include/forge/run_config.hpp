#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "forge/curriculum_builder.hpp"
#include "forge/evaluator.hpp"
#include "forge/llm_backend.hpp"
#include "forge/prompt_builder.hpp"
#include "forge/sql_executor.hpp"

namespace forge {

// Resolved run configuration. Precedence: CLI flags > config file >
// environment > built-in defaults; the resolved result is snapshotted into
// every output directory. Secrets (the API key) travel only through the
// environment and are never written to snapshots.
struct RunConfig {
  std::string catalog_path = "fixtures/cricket_catalog.catalog";
  std::string context_path = "fixtures/cricket_context.context";
  std::string corpus_path;
  std::string out_dir;

  std::string tokenizer_key = "approx4";
  long long full_context_pad_tokens = 16000;

  // backend
  std::string backend_type = "mock";  // mock | http
  MockBackendConfig mock;
  std::string gold_lookup_file;
  HttpBackendConfig http;
  std::int64_t call_budget = -1;

  // executor
  std::string connection;  // empty -> in-memory fixture from catalog + seed_sql
  std::string seed_sql_path = "fixtures/cricket_seed.sql";
  ExecLimits limits;

  // loop
  int max_attempts = 3;
  int parallelism = 1;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  int max_output_tokens = 1024;

  // curriculum
  double scale = 0.01;
  std::string curriculum_variant = "two_phase";
  double holdout_fraction = 0.1;

  // evaluation
  std::string eval_mode = "oracle";
  std::optional<double> baseline_mean_tokens;
  int eval_parallelism = 1;
};

// Overlays the FORGE_ENDPOINT_URL / FORGE_API_KEY environment variables.
void apply_environment(RunConfig& config);

// Overlays keys from a JSON config file; unknown keys are rejected and a
// `backend.http.api_key` entry throws (secrets never live in files).
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

// Snapshot of the resolved config (API key redacted).
std::string run_config_to_json(const RunConfig& config);

// Writes resolved_config.json and catalog_fingerprint.txt into out_dir.
void write_run_snapshot(const std::filesystem::path& out_dir, const RunConfig& config,
                        const std::string& catalog_fingerprint);

// Component factories driven by the resolved config.
SchemaCatalog load_catalog_from_config(const RunConfig& config);
PromptBuilder make_prompt_builder(const RunConfig& config);
std::unique_ptr<Backend> make_backend(const RunConfig& config);
ExecutorFactory make_executor_factory(const RunConfig& config, const SchemaCatalog& catalog);

}  // namespace forge
