#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "forge/schema_catalog.hpp"
#include "forge/tokenizer.hpp"

namespace forge {

enum class PromptKind { FullContext, Memorization, Minimal };

std::string to_string(PromptKind kind);
std::optional<PromptKind> prompt_kind_from_string(std::string_view name);

struct RenderedPrompt {
  PromptKind kind = PromptKind::FullContext;
  std::string text;
  long long token_count = 0;
  std::string database_id;
  std::optional<std::string> question;  // absent for Memorization
};

// Domain guidance document, few-shot exemplars and failure-avoidance rules.
// Loaded from the sectioned text format in docs/file_formats.md.
struct DomainContext {
  std::string context_text;
  std::vector<std::pair<std::string, std::string>> exemplars;  // (question, sql)
  std::vector<std::string> rules;
};

DomainContext load_domain_context(std::string_view source);
DomainContext load_domain_context_file(const std::filesystem::path& path);

// Marker that opens every repair section appended after a failed attempt.
// Its presence distinguishes an error-amended prompt from a first attempt.
inline constexpr std::string_view kRepairSectionMarker = "-- repair attempt ";

// Builds the three prompt species. Pure: identical inputs yield identical
// bytes. The full-context prefix (everything before the question) is
// assembled once and padded up to `full_context_pad_tokens` by repeating the
// domain context document, so desk-scale prompts land near the intended
// full-context size.
class PromptBuilder {
 public:
  struct Options {
    long long full_context_pad_tokens = 16000;
  };

  PromptBuilder(SchemaCatalog catalog, DomainContext context, Tokenizer tokenizer);
  PromptBuilder(SchemaCatalog catalog, DomainContext context, Tokenizer tokenizer,
                Options options);

  RenderedPrompt full_context(const std::string& question) const;

  // Returns the memorization prompt and its expected completion (the
  // canonical schema text). Throws UnknownDatabaseId for a foreign id.
  std::pair<RenderedPrompt, std::string> memorization(const std::string& database_id) const;

  // Exactly two lines: the user query and the database-id trigger. Contains
  // no schema text.
  RenderedPrompt minimal(const std::string& question, const std::string& database_id) const;

  long long count_tokens(std::string_view text) const { return tokenizer_.count(text); }

  const SchemaCatalog& catalog() const { return catalog_; }
  const std::string& schema_text() const { return schema_text_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }

 private:
  SchemaCatalog catalog_;
  DomainContext context_;
  Tokenizer tokenizer_;
  Options options_;
  std::string schema_text_;
  std::string full_context_prefix_;  // everything up to (not including) the task section
};

}  // namespace forge
