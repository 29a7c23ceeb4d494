#include "forge/prompt_builder.hpp"

#include <fstream>
#include <sstream>

#include "forge/errors.hpp"

namespace forge {

namespace {

constexpr std::string_view kSystemInstructions =
    "You are an expert SQL analyst for a cricket statistics platform. "
    "Translate the user's question into a single read-only SQL query for the database "
    "described below. Prefer explicit JOINs, qualify ambiguous columns, and use CTEs to "
    "pre-filter data before joining. Return only SQL.";

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::FullContext: return "full_context";
    case PromptKind::Memorization: return "memorization";
    case PromptKind::Minimal: return "minimal";
  }
  return "full_context";
}

std::optional<PromptKind> prompt_kind_from_string(std::string_view name) {
  if (name == "full_context") return PromptKind::FullContext;
  if (name == "memorization") return PromptKind::Memorization;
  if (name == "minimal") return PromptKind::Minimal;
  return std::nullopt;
}

DomainContext load_domain_context(std::string_view source) {
  DomainContext ctx;
  enum class Section { None, Context, Rules, Exemplars } section = Section::None;
  std::ostringstream context_buf;
  std::optional<std::string> pending_question;

  int line_no = 0;
  size_t pos = 0;
  while (pos <= source.size()) {
    size_t eol = source.find('\n', pos);
    std::string_view raw = source.substr(
        pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? source.size() + 1 : eol + 1;
    ++line_no;

    std::string_view line = trim_view(raw);
    if (line == "[context]") { section = Section::Context; continue; }
    if (line == "[rules]") { section = Section::Rules; continue; }
    if (line == "[exemplars]") { section = Section::Exemplars; continue; }
    if (!line.empty() && line.front() == '[' && line.back() == ']') {
      throw ParseError("unknown section '" + std::string(line) + "'", line_no);
    }

    switch (section) {
      case Section::None:
        if (!line.empty()) throw ParseError("content before first section header", line_no);
        break;
      case Section::Context:
        context_buf << raw << "\n";
        break;
      case Section::Rules:
        if (!line.empty()) {
          if (line.rfind("- ", 0) == 0) line.remove_prefix(2);
          ctx.rules.emplace_back(line);
        }
        break;
      case Section::Exemplars:
        if (line.empty()) break;
        if (line.rfind("Q:", 0) == 0) {
          if (pending_question) throw ParseError("exemplar question without SQL", line_no);
          pending_question = std::string(trim_view(line.substr(2)));
        } else if (line.rfind("SQL:", 0) == 0) {
          if (!pending_question) throw ParseError("exemplar SQL without question", line_no);
          std::string sql(trim_view(line.substr(4)));
          if (sql.empty()) throw ParseError("exemplar SQL must be non-empty", line_no);
          ctx.exemplars.emplace_back(std::move(*pending_question), std::move(sql));
          pending_question.reset();
        } else {
          throw ParseError("exemplar lines must start with Q: or SQL:", line_no);
        }
        break;
    }
  }
  if (pending_question) throw ParseError("exemplar question without SQL at end of file");

  std::string context = context_buf.str();
  // Trim trailing blank lines introduced by section spacing.
  while (!context.empty() && (context.back() == '\n' || context.back() == '\r')) context.pop_back();
  ctx.context_text = std::move(context);
  return ctx;
}

DomainContext load_domain_context_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open domain context file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_domain_context(buf.str());
}

PromptBuilder::PromptBuilder(SchemaCatalog catalog, DomainContext context, Tokenizer tokenizer)
    : PromptBuilder(std::move(catalog), std::move(context), std::move(tokenizer), Options()) {}

PromptBuilder::PromptBuilder(SchemaCatalog catalog, DomainContext context, Tokenizer tokenizer,
                             Options options)
    : catalog_(std::move(catalog)),
      context_(std::move(context)),
      tokenizer_(std::move(tokenizer)),
      options_(options),
      schema_text_(render_schema_text(catalog_)) {
  std::ostringstream out;
  out << kSystemInstructions << "\n";

  if (!context_.rules.empty()) {
    out << "\n-- Rules --\n";
    for (size_t i = 0; i < context_.rules.size(); ++i) {
      out << (i + 1) << ". " << context_.rules[i] << "\n";
    }
  }

  out << "\n-- Database Schema --\n" << schema_text_;

  if (!context_.context_text.empty()) {
    out << "\n-- Domain Context --\n" << context_.context_text << "\n";
  }

  // Deterministic padding: repeat the guidance document until the prefix
  // reaches the configured full-context size.
  std::string_view filler = context_.context_text;
  if (filler.empty()) {
    filler =
        "Consult the schema above for table and column names; never invent identifiers that "
        "are not listed there.";
  }
  int part = 2;
  std::string prefix = out.str();
  while (tokenizer_.count(prefix) < options_.full_context_pad_tokens) {
    std::ostringstream pad;
    pad << "\n-- Domain Context (reference copy, part " << part << ") --\n" << filler << "\n";
    prefix += pad.str();
    ++part;
  }

  if (!context_.exemplars.empty()) {
    std::ostringstream ex;
    ex << "\n-- Worked Examples --\n";
    for (const auto& [q, sql] : context_.exemplars) {
      ex << "Q: " << q << "\nSQL: " << sql << "\n";
    }
    prefix += ex.str();
  }

  full_context_prefix_ = std::move(prefix);
}

RenderedPrompt PromptBuilder::full_context(const std::string& question) const {
  if (question.empty()) throw EmptyQuestion();
  RenderedPrompt prompt;
  prompt.kind = PromptKind::FullContext;
  prompt.database_id = catalog_.database_id;
  prompt.question = question;
  prompt.text = full_context_prefix_ + "\n-- Task --\nUser Query: \"" + question +
                "\"\nGenerate a single SQL query that answers the user query. Return only SQL.";
  prompt.token_count = tokenizer_.count(prompt.text);
  return prompt;
}

std::pair<RenderedPrompt, std::string> PromptBuilder::memorization(
    const std::string& database_id) const {
  if (database_id != catalog_.database_id) throw UnknownDatabaseId(database_id);
  RenderedPrompt prompt;
  prompt.kind = PromptKind::Memorization;
  prompt.database_id = database_id;
  prompt.text = "Give me full schema details for database_id = '" + database_id + "'";
  prompt.token_count = tokenizer_.count(prompt.text);
  return {std::move(prompt), schema_text_};
}

RenderedPrompt PromptBuilder::minimal(const std::string& question,
                                      const std::string& database_id) const {
  if (question.empty()) throw EmptyQuestion();
  if (database_id != catalog_.database_id) throw UnknownDatabaseId(database_id);
  RenderedPrompt prompt;
  prompt.kind = PromptKind::Minimal;
  prompt.database_id = database_id;
  prompt.question = question;
  prompt.text = "User Query: \"" + question + "\"\nGenerate SQL for user query using database_id: \"" +
                database_id + "\"";
  prompt.token_count = tokenizer_.count(prompt.text);
  return prompt;
}

}  // namespace forge
