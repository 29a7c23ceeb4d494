#include "forge/llm_backend.hpp"

#include <cctype>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "forge/det_rng.hpp"
#include "forge/errors.hpp"
#include "sql_lex.hpp"

namespace forge {

namespace {

using nlohmann::json;

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool iequal_at(std::string_view text, size_t pos, std::string_view word) {
  if (pos + word.size() > text.size()) return false;
  for (size_t i = 0; i < word.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[pos + i])) != word[i]) return false;
  }
  // word boundaries on both sides
  if (pos > 0 && is_word_char(text[pos - 1])) return false;
  if (pos + word.size() < text.size() && is_word_char(text[pos + word.size()])) return false;
  return true;
}

// Earliest word-boundary occurrence of SELECT or WITH.
std::optional<size_t> find_sql_anchor(std::string_view text) {
  for (size_t i = 0; i < text.size(); ++i) {
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
    if (c == 's' && iequal_at(text, i, "select")) return i;
    if (c == 'w' && iequal_at(text, i, "with")) return i;
  }
  return std::nullopt;
}

// From an anchored statement: drop anything after the last top-level
// semicolon, trim whitespace.
std::string finalize_sql(std::string_view anchored) {
  auto semis = sqllex::bare_positions(anchored, ';');
  if (!semis.empty()) anchored = anchored.substr(0, semis.back() + 1);
  while (!anchored.empty() && std::isspace(static_cast<unsigned char>(anchored.back()))) {
    anchored.remove_suffix(1);
  }
  return std::string(anchored);
}

std::string escape_single_quotes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    out.push_back(c);
    if (c == '\'') out.push_back('\'');
  }
  return out;
}

}  // namespace

std::string to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

GenerationResponse Backend::generate(const GenerationRequest& request) {
  if (request.max_output_tokens < 1) throw ConfigError("max_output_tokens must be >= 1");
  std::int64_t call_number = calls_.fetch_add(1) + 1;
  if (budget_ >= 0 && call_number > budget_) throw BudgetExceeded(budget_);
  return do_generate(request);
}

std::string to_string(FaultKind kind) {
  switch (kind) {
    case FaultKind::syntax_break: return "syntax_break";
    case FaultKind::wrong_table: return "wrong_table";
    case FaultKind::wrong_column: return "wrong_column";
    case FaultKind::aggregate_misuse: return "aggregate_misuse";
  }
  return "syntax_break";
}

std::optional<FaultKind> fault_kind_from_string(std::string_view name) {
  if (name == "syntax_break") return FaultKind::syntax_break;
  if (name == "wrong_table") return FaultKind::wrong_table;
  if (name == "wrong_column") return FaultKind::wrong_column;
  if (name == "aggregate_misuse") return FaultKind::aggregate_misuse;
  return std::nullopt;
}

std::string apply_fault(const std::string& gold_sql, FaultKind kind) {
  switch (kind) {
    case FaultKind::syntax_break: {
      size_t paren = gold_sql.rfind(')');
      if (paren != std::string::npos) {
        std::string out = gold_sql;
        out.erase(paren, 1);
        return out;
      }
      return gold_sql + " WHERE WHERE";
    }
    case FaultKind::wrong_table: {
      // Rename the first table referenced after FROM or JOIN.
      std::optional<std::pair<size_t, size_t>> target;
      bool after_from = false;
      sqllex::scan(gold_sql, [&](const sqllex::TokenEvent& ev) {
        if (after_from) {
          target = {ev.begin, ev.end};
          return false;
        }
        if (ev.token_lower == "from" || ev.token_lower == "join") after_from = true;
        return true;
      });
      if (!target) return "SELECT * FROM zz_missing_table";
      std::string out = gold_sql;
      out.replace(target->first, target->second - target->first, "zz_missing_table");
      return out;
    }
    case FaultKind::wrong_column: {
      // Prepend a nonexistent column to the first projection list.
      std::optional<size_t> insert_at;
      bool after_select = false;
      sqllex::scan(gold_sql, [&](const sqllex::TokenEvent& ev) {
        if (after_select) {
          if (ev.token_lower == "distinct" || ev.token_lower == "all") return true;
          insert_at = ev.begin;
          return false;
        }
        if (ev.token_lower == "select") after_select = true;
        return true;
      });
      if (after_select && !insert_at) {
        // SELECT followed by non-identifier (e.g. "SELECT *"): inject after
        // the keyword itself.
        std::string out = gold_sql;
        size_t kw = out.find("SELECT");
        if (kw == std::string::npos) kw = out.find("select");
        if (kw != std::string::npos) {
          out.insert(kw + 6, " zz_no_such_column,");
          return out;
        }
      }
      if (!insert_at) return "SELECT zz_no_such_column";
      std::string out = gold_sql;
      out.insert(*insert_at, "zz_no_such_column, ");
      return out;
    }
    case FaultKind::aggregate_misuse: {
      std::string body = gold_sql;
      while (!body.empty() &&
             (std::isspace(static_cast<unsigned char>(body.back())) || body.back() == ';')) {
        body.pop_back();
      }
      return "SELECT * FROM (" + body + ") WHERE SUM(1) > 0";
    }
  }
  return gold_sql;
}

MockBackend::MockBackend(MockBackendConfig config) : config_(std::move(config)) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(config_.first_attempt_success_prob) || !in_unit(config_.repair_success_prob)) {
    throw ConfigError("mock success probabilities must lie in [0, 1]");
  }
  if ((config_.first_attempt_success_prob < 1.0 || config_.repair_success_prob < 1.0) &&
      config_.fault_palette.empty()) {
    throw ConfigError("mock fault_palette must be non-empty when success probability < 1");
  }
}

std::string MockBackend::gold_for(const GenerationRequest& request) const {
  if (!request.prompt.question) {
    throw ConfigError("mock backend requires a question-bearing prompt");
  }
  const std::string& question = *request.prompt.question;
  auto it = config_.gold_lookup.find(question);
  if (it != config_.gold_lookup.end()) return it->second;
  if (config_.fallback_gold_template) {
    std::string out = *config_.fallback_gold_template;
    const std::string escaped = escape_single_quotes(question);
    size_t at;
    while ((at = out.find("{q}")) != std::string::npos) out.replace(at, 3, escaped);
    return out;
  }
  throw ConfigError("mock backend has no gold SQL for question: " + question);
}

GenerationResponse MockBackend::do_generate(const GenerationRequest& request) {
  // Pure function of (seed, request_tag, prompt text).
  std::uint64_t state = splitmix64(config_.seed);
  state = fnv1a64(request.request_tag, state);
  state = fnv1a64(request.prompt.text, state);
  DetRng rng(state);

  const bool amended = request.prompt.text.find(kRepairSectionMarker) != std::string::npos;
  const double success_prob =
      amended ? config_.repair_success_prob : config_.first_attempt_success_prob;
  const std::string gold = gold_for(request);

  GenerationResponse response;
  response.backend_name = "mock";
  response.finish_reason = FinishReason::stop;
  if (rng.next_double() < success_prob) {
    response.raw_text = gold;
  } else {
    FaultKind kind = config_.fault_palette[static_cast<size_t>(
        rng.next_below(config_.fault_palette.size()))];
    response.raw_text = apply_fault(gold, kind);
  }
  return response;
}

struct HttpBackend::Impl {
  HttpBackendConfig config;
  std::mutex mutex;
  std::condition_variable slot_free;
  int in_flight = 0;

  struct Slot {
    Impl& impl;
    explicit Slot(Impl& i) : impl(i) {
      std::unique_lock lock(impl.mutex);
      impl.slot_free.wait(lock, [&] { return impl.in_flight < impl.config.max_in_flight; });
      ++impl.in_flight;
    }
    ~Slot() {
      {
        std::lock_guard lock(impl.mutex);
        --impl.in_flight;
      }
      impl.slot_free.notify_one();
    }
  };
};

HttpBackend::HttpBackend(HttpBackendConfig config) : impl_(std::make_unique<Impl>()) {
  if (config.base_url.empty()) throw ConfigError("http backend requires a base_url");
  if (config.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  impl_->config = std::move(config);
}

HttpBackend::~HttpBackend() = default;

GenerationResponse HttpBackend::do_generate(const GenerationRequest& request) {
  const HttpBackendConfig& cfg = impl_->config;
  Impl::Slot slot(*impl_);

  json body = {
      {"model", cfg.model},
      {"messages", json::array({json{{"role", "user"}, {"content", request.prompt.text}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_output_tokens},
  };
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);

  const auto started = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - started)
        .count();
  };

  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(cfg.retry_base_delay_ms * (1LL << (attempt - 1))));
    }
    httplib::Client client(cfg.base_url);
    client.set_connection_timeout(0, cfg.timeout_ms * 1000LL);
    client.set_read_timeout(cfg.timeout_ms / 1000, (cfg.timeout_ms % 1000) * 1000);

    auto res = client.Post(cfg.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "retryable status HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      GenerationResponse bad;
      bad.finish_reason = FinishReason::error;
      bad.raw_text = "[transport-error] HTTP " + std::to_string(res->status) + ": " + res->body;
      bad.latency_ms = elapsed_ms();
      bad.backend_name = "http:" + cfg.model;
      return bad;
    }

    GenerationResponse out;
    out.backend_name = "http:" + cfg.model;
    out.latency_ms = elapsed_ms();
    try {
      json parsed = json::parse(res->body);
      const auto& choice = parsed.at("choices").at(0);
      out.raw_text = choice.at("message").at("content").get<std::string>();
      std::string reason = choice.value("finish_reason", "stop");
      out.finish_reason = reason == "length" ? FinishReason::length : FinishReason::stop;
    } catch (const json::exception& e) {
      out.finish_reason = FinishReason::error;
      out.raw_text = std::string("[transport-error] malformed response: ") + e.what();
    }
    return out;
  }

  GenerationResponse failed;
  failed.finish_reason = FinishReason::error;
  failed.raw_text = "[transport-error] retries exhausted: " + last_error;
  failed.latency_ms = elapsed_ms();
  failed.backend_name = "http:" + cfg.model;
  return failed;
}

std::optional<std::string> extract_sql(std::string_view raw_text) {
  // Fenced code blocks first.
  size_t fence = raw_text.find("```");
  while (fence != std::string_view::npos) {
    size_t body_start = fence + 3;
    size_t close = raw_text.find("```", body_start);
    if (close == std::string_view::npos) break;
    std::string_view body = raw_text.substr(body_start, close - body_start);
    if (auto anchor = find_sql_anchor(body)) {
      std::string sql = finalize_sql(body.substr(*anchor));
      if (!sql.empty()) return sql;
    }
    fence = raw_text.find("```", close + 3);
  }
  if (auto anchor = find_sql_anchor(raw_text)) {
    std::string sql = finalize_sql(raw_text.substr(*anchor));
    if (!sql.empty()) return sql;
  }
  return std::nullopt;
}

}  // namespace forge
