#include "forge/datagen_loop.hpp"

#include <algorithm>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "forge/digest.hpp"
#include "forge/errors.hpp"

namespace forge {

namespace {

using nlohmann::json;

json trace_to_json(const AttemptTrace& trace) {
  json j = {
      {"attempt_index", trace.attempt_index},
      {"prompt_token_count", trace.prompt_token_count},
      {"raw_output", trace.raw_output},
      {"outcome", to_string(trace.outcome)},
  };
  if (trace.extracted_sql) j["extracted_sql"] = *trace.extracted_sql;
  if (trace.error) {
    j["error"] = {{"class", to_string(trace.error->error_class)},
                  {"message", trace.error->message}};
    if (trace.error->offending_fragment) {
      j["error"]["offending_fragment"] = *trace.error->offending_fragment;
    }
  }
  return j;
}

AttemptTrace trace_from_json(const json& j) {
  AttemptTrace trace;
  trace.attempt_index = j.at("attempt_index").get<int>();
  trace.prompt_token_count = j.at("prompt_token_count").get<long long>();
  trace.raw_output = j.at("raw_output").get<std::string>();
  if (j.contains("extracted_sql")) trace.extracted_sql = j["extracted_sql"].get<std::string>();
  std::string outcome = j.at("outcome").get<std::string>();
  if (outcome == "success") trace.outcome = AttemptOutcome::success;
  else if (outcome == "exec_error") trace.outcome = AttemptOutcome::exec_error;
  else trace.outcome = AttemptOutcome::no_sql;
  if (j.contains("error")) {
    ExecError err;
    err.message = j["error"].at("message").get<std::string>();
    if (auto cls = error_class_from_string(j["error"].at("class").get<std::string>())) {
      err.error_class = *cls;
    }
    if (j["error"].contains("offending_fragment")) {
      err.offending_fragment = j["error"]["offending_fragment"].get<std::string>();
    }
    trace.error = std::move(err);
  }
  return trace;
}

std::string question_hash(const std::string& question) { return sha256_hex(question); }

}  // namespace

std::string to_string(AttemptOutcome outcome) {
  switch (outcome) {
    case AttemptOutcome::success: return "success";
    case AttemptOutcome::exec_error: return "exec_error";
    case AttemptOutcome::no_sql: return "no_sql";
  }
  return "no_sql";
}

RenderedPrompt amend_with_error(const RenderedPrompt& previous_prompt,
                                const std::string& failed_sql, const ExecError& error,
                                const Tokenizer& tokenizer) {
  // Count prior repair sections so the header numbers stack 2, 3, ...
  int prior = 0;
  size_t at = 0;
  while ((at = previous_prompt.text.find(kRepairSectionMarker, at)) != std::string::npos) {
    ++prior;
    at += kRepairSectionMarker.size();
  }

  std::ostringstream section;
  section << "\n\n" << kRepairSectionMarker << (prior + 1) << " --\n"
          << "The previous SQL failed to execute.\n"
          << "Failed SQL:\n"
          << failed_sql << "\n"
          << "Database error [" << to_string(error.error_class) << "]: " << error.message << "\n"
          << "Rewrite the query to fix this error and return only the corrected SQL.";

  RenderedPrompt amended = previous_prompt;
  amended.text += section.str();
  amended.token_count = tokenizer.count(amended.text);
  return amended;
}

PairOutcome generate_pair(const std::string& question, const PromptBuilder& prompts,
                          Backend& backend, SqlExecutor& executor, int max_attempts,
                          const std::string& tag_prefix, double temperature,
                          int max_output_tokens) {
  if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");

  std::vector<AttemptTrace> attempts;
  RenderedPrompt prompt = prompts.full_context(question);

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    GenerationRequest request;
    request.prompt = prompt;
    request.temperature = temperature;
    request.max_output_tokens = max_output_tokens;
    request.request_tag = tag_prefix + "a" + std::to_string(attempt);

    GenerationResponse response = backend.generate(request);

    AttemptTrace trace;
    trace.attempt_index = attempt;
    trace.prompt_token_count = prompt.token_count;
    trace.raw_output = response.raw_text;

    std::optional<std::string> sql;
    if (response.finish_reason != FinishReason::error) sql = extract_sql(response.raw_text);

    if (!sql) {
      trace.outcome = AttemptOutcome::no_sql;
      attempts.push_back(trace);
      if (attempt < max_attempts) {
        ExecError no_sql_note{ErrorClass::other, "no SQL statement found in model output", {}};
        prompt = amend_with_error(prompt, "", no_sql_note, prompts.tokenizer());
      }
      continue;
    }

    trace.extracted_sql = sql;
    ExecOutcome outcome = executor.execute(*sql);
    if (std::holds_alternative<QueryResult>(outcome)) {
      trace.outcome = AttemptOutcome::success;
      attempts.push_back(trace);
      GroundTruthPair pair;
      pair.question = question;
      pair.sql = *sql;
      pair.attempts = std::move(attempts);
      pair.result_fingerprint =
          canonicalize(std::get<QueryResult>(outcome), /*order_sensitive=*/false).digest;
      pair.catalog_fingerprint = fingerprint(prompts.catalog());
      return pair;
    }

    const ExecError& error = std::get<ExecError>(outcome);
    trace.outcome = AttemptOutcome::exec_error;
    trace.error = error;
    attempts.push_back(trace);
    if (attempt < max_attempts) {
      prompt = amend_with_error(prompt, *sql, error, prompts.tokenizer());
    }
  }

  return AbandonedQuestion{question, std::move(attempts)};
}

namespace {

// Flushes completed results in input order as soon as the prefix is
// contiguous. Because only the contiguous prefix is ever flushed, done.txt
// is always a prefix of the input order, which makes interrupted runs
// resumable and keeps resumed output files in input order.
class OrderedSink {
 public:
  OrderedSink(size_t total, const std::filesystem::path& out_dir, bool resume)
      : results_(total), written_(total, false) {
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      auto mode = std::ios::binary | (resume ? std::ios::app : std::ios::trunc);
      pairs_.open(out_dir / "pairs.jsonl", mode);
      abandoned_.open(out_dir / "abandoned.jsonl", mode);
      done_.open(out_dir / "done.txt", mode);
      to_disk_ = true;
    }
  }

  // already_written marks outcomes replayed from a previous run's files.
  void deposit(size_t index, PairOutcome outcome, bool already_written = false) {
    std::lock_guard lock(mutex_);
    results_[index] = std::move(outcome);
    written_[index] = already_written;
    while (next_ < results_.size() && results_[next_].has_value()) {
      if (!written_[next_]) flush_one(*results_[next_]);
      ++next_;
    }
  }

  std::vector<std::optional<PairOutcome>> take_results() { return std::move(results_); }

 private:
  void flush_one(const PairOutcome& outcome) {
    if (!to_disk_) return;
    if (std::holds_alternative<GroundTruthPair>(outcome)) {
      const auto& pair = std::get<GroundTruthPair>(outcome);
      pairs_ << pair_to_json_line(pair) << "\n";
      done_ << question_hash(pair.question) << "\n";
    } else {
      const auto& ab = std::get<AbandonedQuestion>(outcome);
      abandoned_ << abandoned_to_json_line(ab) << "\n";
      done_ << question_hash(ab.question) << "\n";
    }
    pairs_.flush();
    abandoned_.flush();
    done_.flush();
  }

  std::mutex mutex_;
  std::vector<std::optional<PairOutcome>> results_;
  std::vector<char> written_;
  size_t next_ = 0;
  bool to_disk_ = false;
  std::ofstream pairs_, abandoned_, done_;
};

}  // namespace

CorpusRunResult run_corpus(const std::vector<std::string>& questions, const LoopDeps& deps,
                           const LoopConfig& config, const std::filesystem::path& out_dir) {
  if (!deps.prompts || !deps.backend || !deps.executor_factory) {
    throw ConfigError("run_corpus requires prompts, backend and an executor factory");
  }

  CorpusRunResult run;

  // Deduplicate by exact text, preserving first-occurrence order.
  std::vector<std::string> unique;
  unique.reserve(questions.size());
  {
    std::set<std::string_view> seen;
    for (const auto& q : questions) {
      if (seen.insert(q).second) unique.push_back(q);
      else ++run.stats.duplicates_dropped;
    }
  }
  run.stats.total_questions = static_cast<std::int64_t>(unique.size());

  // Resume support: replay outcomes recorded by a previous interrupted run
  // in the same directory (keyed by question hash via done.txt).
  std::map<std::string, PairOutcome> previous;
  bool resume = false;
  if (!out_dir.empty() && std::filesystem::exists(out_dir / "done.txt")) {
    std::set<std::string> done_hashes;
    {
      std::ifstream done_in(out_dir / "done.txt");
      std::string line;
      while (std::getline(done_in, line)) {
        if (!line.empty()) done_hashes.insert(line);
      }
    }
    resume = !done_hashes.empty();
    auto replay_file = [&](const std::filesystem::path& path, bool is_pair) {
      std::ifstream in(path, std::ios::binary);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded()) continue;
        if (is_pair) {
          GroundTruthPair pair = pair_from_json_line(line);
          std::string hash = question_hash(pair.question);
          if (done_hashes.count(hash)) previous.emplace(hash, std::move(pair));
        } else {
          AbandonedQuestion ab;
          ab.question = j.at("question").get<std::string>();
          if (j.contains("attempts")) {
            for (const auto& t : j["attempts"]) ab.attempts.push_back(trace_from_json(t));
          }
          std::string hash = question_hash(ab.question);
          if (done_hashes.count(hash)) previous.emplace(hash, std::move(ab));
        }
      }
    };
    if (resume) {
      replay_file(out_dir / "pairs.jsonl", true);
      replay_file(out_dir / "abandoned.jsonl", false);
    }
  }

  OrderedSink sink(unique.size(), out_dir, resume);

  std::atomic<size_t> cursor{0};
  std::atomic<bool> budget_hit{false};
  std::mutex error_mutex;
  std::exception_ptr fatal;

  const int workers = std::max(1, config.parallelism);
  auto worker_fn = [&] {
    std::unique_ptr<SqlExecutor> executor;
    try {
      executor = deps.executor_factory();
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!fatal) fatal = std::current_exception();
      return;
    }
    while (true) {
      if (budget_hit.load()) return;
      size_t index = cursor.fetch_add(1);
      if (index >= unique.size()) return;
      const std::string& question = unique[index];
      if (auto it = previous.find(question_hash(question)); it != previous.end()) {
        sink.deposit(index, it->second, /*already_written=*/true);
        continue;
      }
      std::ostringstream tag;
      tag << "q" << index << ":";
      try {
        PairOutcome outcome =
            generate_pair(question, *deps.prompts, *deps.backend, *executor, config.max_attempts,
                          tag.str(), config.temperature, config.max_output_tokens);
        sink.deposit(index, std::move(outcome));
      } catch (const BudgetExceeded&) {
        budget_hit.store(true);
        return;
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!fatal) fatal = std::current_exception();
        budget_hit.store(true);
        return;
      }
    }
  };

  if (workers == 1) {
    worker_fn();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker_fn);
    for (auto& t : pool) t.join();
  }

  if (fatal) std::rethrow_exception(fatal);

  auto results = sink.take_results();
  for (auto& slot : results) {
    if (!slot.has_value()) {
      ++run.stats.unprocessed;
      continue;
    }
    if (std::holds_alternative<GroundTruthPair>(*slot)) {
      auto& pair = std::get<GroundTruthPair>(*slot);
      ++run.stats.retained;
      run.stats.attempts_histogram[static_cast<int>(pair.attempts.size())]++;
      for (const auto& trace : pair.attempts) {
        if (trace.error) run.stats.error_class_counts[trace.error->error_class]++;
      }
      run.pairs.push_back(std::move(pair));
    } else {
      auto& ab = std::get<AbandonedQuestion>(*slot);
      ++run.stats.abandoned;
      run.stats.attempts_histogram[static_cast<int>(ab.attempts.size())]++;
      for (const auto& trace : ab.attempts) {
        if (trace.error) run.stats.error_class_counts[trace.error->error_class]++;
      }
      run.abandoned.push_back(std::move(ab));
    }
  }
  run.stats.aborted_on_budget = budget_hit.load();

  if (config.reverify && !budget_hit.load()) {
    auto executor = deps.executor_factory();
    for (const auto& pair : run.pairs) {
      ExecOutcome outcome = executor->execute(pair.sql);
      if (std::holds_alternative<ExecError>(outcome)) {
        throw ForgeError("re-verification failed for retained pair '" + pair.question +
                         "': " + std::get<ExecError>(outcome).message);
      }
    }
  }

  if (!out_dir.empty()) {
    std::ofstream stats_out(out_dir / "stats.json", std::ios::binary | std::ios::trunc);
    stats_out << stats_to_json(run.stats) << "\n";
  }
  return run;
}

std::string pair_to_json_line(const GroundTruthPair& pair) {
  json j = {
      {"question", pair.question},
      {"sql", pair.sql},
      {"result_fingerprint", pair.result_fingerprint},
      {"catalog_fingerprint", pair.catalog_fingerprint},
  };
  json attempts = json::array();
  for (const auto& trace : pair.attempts) attempts.push_back(trace_to_json(trace));
  j["attempts"] = std::move(attempts);
  return j.dump();
}

std::string abandoned_to_json_line(const AbandonedQuestion& abandoned) {
  json attempts = json::array();
  for (const auto& trace : abandoned.attempts) attempts.push_back(trace_to_json(trace));
  json j = {{"question", abandoned.question}, {"attempts", std::move(attempts)}};
  return j.dump();
}

GroundTruthPair pair_from_json_line(const std::string& line) {
  json j = json::parse(line);
  GroundTruthPair pair;
  pair.question = j.at("question").get<std::string>();
  pair.sql = j.at("sql").get<std::string>();
  pair.result_fingerprint = j.value("result_fingerprint", "");
  pair.catalog_fingerprint = j.value("catalog_fingerprint", "");
  if (j.contains("attempts")) {
    for (const auto& t : j["attempts"]) pair.attempts.push_back(trace_from_json(t));
  }
  return pair;
}

std::vector<GroundTruthPair> load_pairs_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open pairs file: " + path.string());
  std::vector<GroundTruthPair> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      pairs.push_back(pair_from_json_line(line));
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad pair record: ") + e.what(), line_no);
    }
  }
  return pairs;
}

std::string stats_to_json(const LoopStats& stats) {
  json histogram = json::object();
  for (const auto& [attempts, count] : stats.attempts_histogram) {
    histogram[std::to_string(attempts)] = count;
  }
  json errors = json::object();
  for (const auto& [cls, count] : stats.error_class_counts) {
    errors[to_string(cls)] = count;
  }
  json j = {
      {"total_questions", stats.total_questions},
      {"retained", stats.retained},
      {"abandoned", stats.abandoned},
      {"duplicates_dropped", stats.duplicates_dropped},
      {"attempts_histogram", std::move(histogram)},
      {"error_class_counts", std::move(errors)},
      {"aborted_on_budget", stats.aborted_on_budget},
      {"unprocessed", stats.unprocessed},
  };
  return j.dump(2);
}

}  // namespace forge
