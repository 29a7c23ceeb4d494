#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "forge/llm_backend.hpp"
#include "forge/prompt_builder.hpp"
#include "forge/sql_executor.hpp"

namespace forge {

enum class AttemptOutcome { success, exec_error, no_sql };

std::string to_string(AttemptOutcome outcome);

struct AttemptTrace {
  int attempt_index = 1;  // 1-based
  long long prompt_token_count = 0;
  std::string raw_output;
  std::optional<std::string> extracted_sql;
  AttemptOutcome outcome = AttemptOutcome::no_sql;
  std::optional<ExecError> error;  // present for exec_error
};

// Execution-verified (question, SQL) pair plus its full attempt provenance.
struct GroundTruthPair {
  std::string question;
  std::string sql;
  std::vector<AttemptTrace> attempts;
  std::string result_fingerprint;
  std::string catalog_fingerprint;
};

struct AbandonedQuestion {
  std::string question;
  std::vector<AttemptTrace> attempts;
};

using PairOutcome = std::variant<GroundTruthPair, AbandonedQuestion>;

struct LoopStats {
  std::int64_t total_questions = 0;
  std::int64_t retained = 0;
  std::int64_t abandoned = 0;
  std::int64_t duplicates_dropped = 0;
  std::map<int, std::int64_t> attempts_histogram;        // attempt count -> questions
  std::map<ErrorClass, std::int64_t> error_class_counts; // over all failed attempts
  bool aborted_on_budget = false;
  std::int64_t unprocessed = 0;  // questions left unprocessed by a budget abort
};

struct LoopConfig {
  int max_attempts = 3;
  int parallelism = 1;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  ExecLimits limits;
  // Verify every retained pair by re-executing it after the run.
  bool reverify = true;
};

struct LoopDeps {
  const PromptBuilder* prompts = nullptr;
  Backend* backend = nullptr;
  ExecutorFactory executor_factory;
};

// Appends the fixed-format repair section (failed SQL, engine message,
// error class, correction instruction) to the previous prompt. All earlier
// content is preserved verbatim and the token count is recomputed.
RenderedPrompt amend_with_error(const RenderedPrompt& previous_prompt,
                                const std::string& failed_sql, const ExecError& error,
                                const Tokenizer& tokenizer);

// One question through the generate -> execute -> amend loop. Attempt 1 uses
// the full-context prompt; subsequent attempts append repair sections.
// Stops at the first execution success or after max_attempts.
PairOutcome generate_pair(const std::string& question, const PromptBuilder& prompts,
                          Backend& backend, SqlExecutor& executor, int max_attempts,
                          const std::string& tag_prefix = "", double temperature = 0.0,
                          int max_output_tokens = 1024);

struct CorpusRunResult {
  std::vector<GroundTruthPair> pairs;
  std::vector<AbandonedQuestion> abandoned;
  LoopStats stats;
};

// Drives the loop over a question corpus with bounded parallelism. Questions
// are deduplicated by exact text. Outputs are written incrementally in input
// order (pairs.jsonl, abandoned.jsonl, done.txt, stats.json under out_dir
// when provided) and runs are crash-resumable through the done list.
// A BudgetExceeded abort preserves partial outputs and is flagged in stats.
CorpusRunResult run_corpus(const std::vector<std::string>& questions, const LoopDeps& deps,
                           const LoopConfig& config,
                           const std::filesystem::path& out_dir = {});

// JSONL (de)serialization for loop artifacts; schemas in docs/file_formats.md.
std::string pair_to_json_line(const GroundTruthPair& pair);
std::string abandoned_to_json_line(const AbandonedQuestion& abandoned);
GroundTruthPair pair_from_json_line(const std::string& line);
std::vector<GroundTruthPair> load_pairs_file(const std::filesystem::path& path);
std::string stats_to_json(const LoopStats& stats);

}  // namespace forge
