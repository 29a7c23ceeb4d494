#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forge/llm_backend.hpp"
#include "forge/prompt_builder.hpp"
#include "forge/sql_executor.hpp"

namespace forge {

struct PredictionRecord {
  std::string question;
  std::string predicted_sql;
  std::string gold_sql;
  PromptKind prompt_kind = PromptKind::Minimal;
  long long prompt_token_count = 0;
};

enum class VerdictKind { equivalent, not_equivalent, not_executable };

std::string to_string(VerdictKind kind);

struct SemanticVerdict {
  VerdictKind kind = VerdictKind::not_executable;
  std::string evidence;  // result digests for the oracle, rationale for the judge
};

// True when the statement has an ORDER BY at parenthesis depth zero; drives
// the order sensitivity of the result-set comparison.
bool has_top_level_order_by(std::string_view sql);

// Executes both statements and compares canonical result sets. Row order
// matters only when the gold query orders its output.
SemanticVerdict semantic_equivalent(const std::string& predicted_sql, const std::string& gold_sql,
                                    SqlExecutor& executor);

struct ExecutionOutcomeRecord {
  bool executed = false;
  std::optional<ErrorClass> error_class;  // set when execution failed
};

// Fraction of records whose predicted SQL executes cleanly; a missing or
// unextractable statement counts as a failure.
std::pair<double, std::vector<ExecutionOutcomeRecord>> execution_success(
    const std::vector<PredictionRecord>& records, SqlExecutor& executor);

// 100 * (1 - candidate / baseline); throws ZeroBaseline when baseline <= 0.
double token_reduction(double baseline_mean_tokens, double candidate_mean_tokens);

// Builds the judging prompt for one record (question plus both rendered
// result tables). Versioned in docs/prompts.md.
std::string build_judge_prompt(const std::string& question, const QueryResult& predicted,
                               const QueryResult& gold);

// Parses the constrained verdict token out of a judge response.
SemanticVerdict parse_judge_response(const std::string& raw_text);

// Runs the LLM judge over executed record results. Entries are nullopt for
// records skipped after a BudgetExceeded abort (counted, excluded from
// judge-based rates).
std::vector<std::optional<SemanticVerdict>> judge_batch(
    const std::vector<PredictionRecord>& records,
    const std::vector<std::optional<std::pair<QueryResult, QueryResult>>>& executed_results,
    Backend& backend);

enum class EvalMode { oracle, judge, both };

std::optional<EvalMode> eval_mode_from_string(std::string_view name);

struct RecordVerdict {
  bool executed = false;
  std::optional<ErrorClass> error_class;
  SemanticVerdict oracle;
  std::optional<SemanticVerdict> judge;
};

struct EvalReport {
  std::int64_t n = 0;
  double execution_success_rate = 0.0;
  // Both denominators are reported; semantic_overall is the figure
  // comparable across runs (equivalent / n).
  double semantic_overall = 0.0;
  double semantic_given_success = 0.0;
  double mean_prompt_tokens = 0.0;
  std::optional<double> token_reduction_vs_baseline;
  std::map<ErrorClass, std::int64_t> error_audit;  // over failed executions
  std::vector<RecordVerdict> records;
  std::int64_t unjudged = 0;
  std::optional<double> judge_semantic_overall;
};

struct EvalConfig {
  ExecutorFactory executor_factory;
  EvalMode mode = EvalMode::oracle;
  Backend* judge_backend = nullptr;  // required for judge/both
  std::optional<double> baseline_mean_tokens;
  int parallelism = 1;
  // When set, must match the catalog fingerprint recorded alongside the
  // predictions; a mismatch aborts with FingerprintMismatch.
  std::optional<std::string> expected_catalog_fingerprint;
  std::optional<std::string> recorded_catalog_fingerprint;
};

EvalReport evaluate_corpus(const std::vector<PredictionRecord>& records, const EvalConfig& config);

// Predictions JSONL + optional side manifest (catalog fingerprint).
std::string prediction_to_json_line(const PredictionRecord& record);
std::vector<PredictionRecord> load_predictions_file(const std::filesystem::path& path);
void write_predictions_file(const std::filesystem::path& path,
                            const std::vector<PredictionRecord>& records,
                            const std::string& catalog_fingerprint);
std::optional<std::string> read_predictions_manifest_fingerprint(
    const std::filesystem::path& predictions_path);

std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);
void write_report_files(const std::filesystem::path& out_dir, const EvalReport& report);

}  // namespace forge
