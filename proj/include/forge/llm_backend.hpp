#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/prompt_builder.hpp"

namespace forge {

struct GenerationRequest {
  RenderedPrompt prompt;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string request_tag;  // opaque correlation string
};

enum class FinishReason { stop, length, error };

std::string to_string(FinishReason reason);

struct GenerationResponse {
  std::string raw_text;
  FinishReason finish_reason = FinishReason::stop;
  std::int64_t latency_ms = 0;
  std::string backend_name;
};

// Uniform generation interface. Handles are shared across workers, so
// implementations must be thread-safe. An optional per-run call budget
// aborts runaway runs with BudgetExceeded.
class Backend {
 public:
  virtual ~Backend() = default;

  GenerationResponse generate(const GenerationRequest& request);

  // budget < 0 disables the check.
  void set_call_budget(std::int64_t budget) { budget_ = budget; }
  std::int64_t calls_made() const { return calls_.load(); }

 protected:
  virtual GenerationResponse do_generate(const GenerationRequest& request) = 0;

 private:
  std::atomic<std::int64_t> calls_{0};
  std::int64_t budget_ = -1;
};

enum class FaultKind { syntax_break, wrong_table, wrong_column, aggregate_misuse };

std::string to_string(FaultKind kind);
std::optional<FaultKind> fault_kind_from_string(std::string_view name);

// Structural gold-SQL mutations used by the mock to simulate the observed
// model failure classes. Each yields SQL that fails execution with the
// matching error class.
std::string apply_fault(const std::string& gold_sql, FaultKind kind);

struct MockBackendConfig {
  std::uint64_t seed = 0;
  std::map<std::string, std::string> gold_lookup;  // question -> gold SQL
  double first_attempt_success_prob = 1.0;         // s
  double repair_success_prob = 1.0;                // p
  std::vector<FaultKind> fault_palette;            // non-empty when s < 1
  // When set, questions missing from gold_lookup use this template with
  // "{q}" replaced by the SQL-escaped question text. Lets synthetic corpora
  // run without a hand-written gold map.
  std::optional<std::string> fallback_gold_template;
};

// Deterministic simulated generator: a pure function of
// (seed, request_tag, prompt text). First-attempt prompts return gold SQL
// with probability s, otherwise gold mutated by a palette fault;
// error-amended prompts (detected via the repair-section marker) return
// gold with probability p, otherwise a fresh fault.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockBackendConfig config);

 protected:
  GenerationResponse do_generate(const GenerationRequest& request) override;

 private:
  std::string gold_for(const GenerationRequest& request) const;
  MockBackendConfig config_;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. http://localhost:8000
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key;  // from the environment, never from config files
  int timeout_ms = 30000;
  int max_retries = 3;           // transport retries after the first attempt
  int retry_base_delay_ms = 250; // doubles per retry
  int max_in_flight = 4;
};

// OpenAI-compatible chat-completions client over HTTP. Transport failures
// and retryable statuses (429/5xx) are retried with exponential backoff up
// to max_retries; exhaustion yields finish_reason=error with the transport
// message embedded in raw_text. 401/403 throw AuthError.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

 protected:
  GenerationResponse do_generate(const GenerationRequest& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Pulls the SQL statement out of raw model output: the first fenced code
// block when one contains SQL, otherwise the text from the first
// SELECT/WITH keyword; prose after the final semicolon is dropped.
// Returns nullopt when no candidate exists (NoSqlFound downstream).
// Idempotent on its own successful output.
std::optional<std::string> extract_sql(std::string_view raw_text);

}  // namespace forge
