#include "forge/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "forge/errors.hpp"
#include "sql_lex.hpp"

namespace forge {

namespace {

using nlohmann::json;

constexpr std::string_view kJudgeEquivalent = "EQUIVALENT";
constexpr std::string_view kJudgeNotEquivalent = "NOT_EQUIVALENT";

std::string render_cell(const Value& value) {
  const Value v = normalize_value(value);
  if (std::holds_alternative<std::monostate>(v)) return "NULL";
  if (std::holds_alternative<std::int64_t>(v)) return std::to_string(std::get<std::int64_t>(v));
  if (std::holds_alternative<double>(v)) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", std::get<double>(v));
    return buf;
  }
  if (std::holds_alternative<bool>(v)) return std::get<bool>(v) ? "true" : "false";
  if (std::holds_alternative<Date>(v)) {
    const Date& d = std::get<Date>(v);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
  }
  return std::get<std::string>(v);
}

std::string render_result_table(const QueryResult& result) {
  std::ostringstream out;
  for (size_t i = 0; i < result.column_names.size(); ++i) {
    if (i) out << " | ";
    out << result.column_names[i];
  }
  out << "\n";
  for (const auto& row : result.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << " | ";
      out << render_cell(row[i]);
    }
    out << "\n";
  }
  out << "(" << result.rows.size() << " rows)";
  return out.str();
}

}  // namespace

std::string to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::equivalent: return "equivalent";
    case VerdictKind::not_equivalent: return "not_equivalent";
    case VerdictKind::not_executable: return "not_executable";
  }
  return "not_executable";
}

std::optional<EvalMode> eval_mode_from_string(std::string_view name) {
  if (name == "oracle") return EvalMode::oracle;
  if (name == "judge") return EvalMode::judge;
  if (name == "both") return EvalMode::both;
  return std::nullopt;
}

bool has_top_level_order_by(std::string_view sql) {
  bool pending_order = false;
  bool found = false;
  sqllex::scan(sql, [&](const sqllex::TokenEvent& ev) {
    if (pending_order && ev.paren_depth == 0 && ev.token_lower == "by") {
      found = true;
      return false;
    }
    pending_order = (ev.paren_depth == 0 && ev.token_lower == "order");
    return true;
  });
  return found;
}

SemanticVerdict semantic_equivalent(const std::string& predicted_sql, const std::string& gold_sql,
                                    SqlExecutor& executor) {
  ExecOutcome gold_outcome = executor.execute(gold_sql);
  if (std::holds_alternative<ExecError>(gold_outcome)) {
    throw ForgeError("gold SQL failed to execute: " + std::get<ExecError>(gold_outcome).message);
  }
  ExecOutcome pred_outcome = executor.execute(predicted_sql);
  if (std::holds_alternative<ExecError>(pred_outcome)) {
    return SemanticVerdict{VerdictKind::not_executable,
                           std::get<ExecError>(pred_outcome).message};
  }

  const bool order_sensitive = has_top_level_order_by(gold_sql);
  CanonicalResult pred = canonicalize(std::get<QueryResult>(pred_outcome), order_sensitive);
  CanonicalResult gold = canonicalize(std::get<QueryResult>(gold_outcome), order_sensitive);
  SemanticVerdict verdict;
  verdict.kind = pred == gold ? VerdictKind::equivalent : VerdictKind::not_equivalent;
  verdict.evidence = "pred=" + pred.digest + ";gold=" + gold.digest;
  return verdict;
}

std::pair<double, std::vector<ExecutionOutcomeRecord>> execution_success(
    const std::vector<PredictionRecord>& records, SqlExecutor& executor) {
  if (records.empty()) throw ConfigError("execution_success requires a non-empty record set");
  std::vector<ExecutionOutcomeRecord> outcomes;
  outcomes.reserve(records.size());
  std::int64_t successes = 0;
  for (const auto& record : records) {
    ExecutionOutcomeRecord outcome;
    ExecOutcome result = executor.execute(record.predicted_sql);
    if (std::holds_alternative<QueryResult>(result)) {
      outcome.executed = true;
      ++successes;
    } else {
      outcome.error_class = std::get<ExecError>(result).error_class;
    }
    outcomes.push_back(outcome);
  }
  return {static_cast<double>(successes) / static_cast<double>(records.size()),
          std::move(outcomes)};
}

double token_reduction(double baseline_mean_tokens, double candidate_mean_tokens) {
  if (baseline_mean_tokens <= 0.0) throw ZeroBaseline();
  return 100.0 * (1.0 - candidate_mean_tokens / baseline_mean_tokens);
}

std::string build_judge_prompt(const std::string& question, const QueryResult& predicted,
                               const QueryResult& gold) {
  std::ostringstream out;
  out << "You are judging whether two SQL result tables answer the same question "
         "equivalently.\n"
      << "Question: " << question << "\n\n"
      << "Predicted result table:\n"
      << render_result_table(predicted) << "\n\n"
      << "Reference result table:\n"
      << render_result_table(gold) << "\n\n"
      << "Respond with exactly one word: " << kJudgeEquivalent << " or " << kJudgeNotEquivalent
      << ".";
  return out.str();
}

SemanticVerdict parse_judge_response(const std::string& raw_text) {
  // NOT_EQUIVALENT must be checked first: EQUIVALENT is a substring of it.
  if (raw_text.find(kJudgeNotEquivalent) != std::string::npos) {
    return {VerdictKind::not_equivalent, "judge"};
  }
  size_t at = raw_text.find(kJudgeEquivalent);
  while (at != std::string::npos) {
    bool left_ok = at == 0 || (!std::isalnum(static_cast<unsigned char>(raw_text[at - 1])) &&
                               raw_text[at - 1] != '_');
    size_t end = at + kJudgeEquivalent.size();
    bool right_ok = end >= raw_text.size() ||
                    (!std::isalnum(static_cast<unsigned char>(raw_text[end])) && raw_text[end] != '_');
    if (left_ok && right_ok) return {VerdictKind::equivalent, "judge"};
    at = raw_text.find(kJudgeEquivalent, at + 1);
  }
  return {VerdictKind::not_equivalent, "judge_unparseable"};
}

std::vector<std::optional<SemanticVerdict>> judge_batch(
    const std::vector<PredictionRecord>& records,
    const std::vector<std::optional<std::pair<QueryResult, QueryResult>>>& executed_results,
    Backend& backend) {
  if (records.size() != executed_results.size()) {
    throw ConfigError("judge_batch requires one executed result entry per record");
  }
  std::vector<std::optional<SemanticVerdict>> verdicts(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    if (!executed_results[i]) {
      verdicts[i] = SemanticVerdict{VerdictKind::not_executable, "prediction did not execute"};
      continue;
    }
    GenerationRequest request;
    request.prompt.kind = PromptKind::Minimal;
    request.prompt.text =
        build_judge_prompt(records[i].question, executed_results[i]->first,
                           executed_results[i]->second);
    request.prompt.question = records[i].question;
    request.prompt.token_count = static_cast<long long>((request.prompt.text.size() + 3) / 4);
    request.request_tag = "judge:" + std::to_string(i);
    request.max_output_tokens = 16;
    try {
      GenerationResponse response = backend.generate(request);
      if (response.finish_reason == FinishReason::error) {
        verdicts[i] = SemanticVerdict{VerdictKind::not_equivalent, "judge_unparseable"};
      } else {
        verdicts[i] = parse_judge_response(response.raw_text);
      }
    } catch (const BudgetExceeded&) {
      // Remaining records stay unjudged.
      break;
    }
  }
  return verdicts;
}

EvalReport evaluate_corpus(const std::vector<PredictionRecord>& records,
                           const EvalConfig& config) {
  if (records.empty()) throw ConfigError("evaluate_corpus requires a non-empty record set");
  if (!config.executor_factory) throw ConfigError("evaluate_corpus requires an executor factory");
  if ((config.mode == EvalMode::judge || config.mode == EvalMode::both) &&
      config.judge_backend == nullptr) {
    throw ConfigError("judge mode requires a judge backend");
  }
  if (config.expected_catalog_fingerprint && config.recorded_catalog_fingerprint &&
      *config.expected_catalog_fingerprint != *config.recorded_catalog_fingerprint) {
    throw FingerprintMismatch("catalog fingerprint mismatch: expected " +
                              *config.expected_catalog_fingerprint + ", predictions recorded " +
                              *config.recorded_catalog_fingerprint);
  }

  EvalReport report;
  report.n = static_cast<std::int64_t>(records.size());
  report.records.resize(records.size());

  std::vector<std::optional<std::pair<QueryResult, QueryResult>>> executed(records.size());

  // Embarrassingly parallel per-record evaluation; the reduction below is a
  // deterministic pass in input order.
  const int workers = std::max(1, config.parallelism);
  std::atomic<size_t> cursor{0};
  std::mutex error_mutex;
  std::exception_ptr fatal;

  auto worker_fn = [&] {
    std::unique_ptr<SqlExecutor> executor;
    try {
      executor = config.executor_factory();
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!fatal) fatal = std::current_exception();
      return;
    }
    while (true) {
      size_t index = cursor.fetch_add(1);
      if (index >= records.size()) return;
      const PredictionRecord& record = records[index];
      RecordVerdict& verdict = report.records[index];
      try {
        ExecOutcome gold_outcome = executor->execute(record.gold_sql);
        if (std::holds_alternative<ExecError>(gold_outcome)) {
          throw ForgeError("gold SQL failed to execute for question '" + record.question +
                           "': " + std::get<ExecError>(gold_outcome).message);
        }
        ExecOutcome pred_outcome = executor->execute(record.predicted_sql);
        if (std::holds_alternative<ExecError>(pred_outcome)) {
          const auto& error = std::get<ExecError>(pred_outcome);
          verdict.executed = false;
          verdict.error_class = error.error_class;
          verdict.oracle = SemanticVerdict{VerdictKind::not_executable, error.message};
          continue;
        }
        verdict.executed = true;
        const bool order_sensitive = has_top_level_order_by(record.gold_sql);
        CanonicalResult pred =
            canonicalize(std::get<QueryResult>(pred_outcome), order_sensitive);
        CanonicalResult gold =
            canonicalize(std::get<QueryResult>(gold_outcome), order_sensitive);
        verdict.oracle.kind =
            pred == gold ? VerdictKind::equivalent : VerdictKind::not_equivalent;
        verdict.oracle.evidence = "pred=" + pred.digest + ";gold=" + gold.digest;
        executed[index] = std::make_pair(std::move(std::get<QueryResult>(pred_outcome)),
                                         std::move(std::get<QueryResult>(gold_outcome)));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!fatal) fatal = std::current_exception();
        return;
      }
    }
  };

  if (workers == 1) {
    worker_fn();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker_fn);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  if (config.mode == EvalMode::judge || config.mode == EvalMode::both) {
    auto verdicts = judge_batch(records, executed, *config.judge_backend);
    std::int64_t judged_equivalent = 0, judged = 0;
    for (size_t i = 0; i < verdicts.size(); ++i) {
      if (!verdicts[i]) {
        ++report.unjudged;
        continue;
      }
      report.records[i].judge = verdicts[i];
      if (report.records[i].executed) {
        ++judged;
        if (verdicts[i]->kind == VerdictKind::equivalent) ++judged_equivalent;
      }
    }
    std::int64_t denominator = report.n - report.unjudged;
    if (denominator > 0) {
      report.judge_semantic_overall =
          static_cast<double>(judged_equivalent) / static_cast<double>(denominator);
    }
  }

  std::int64_t successes = 0, equivalent = 0;
  double token_sum = 0.0;
  for (size_t i = 0; i < records.size(); ++i) {
    const RecordVerdict& verdict = report.records[i];
    if (verdict.executed) {
      ++successes;
      if (verdict.oracle.kind == VerdictKind::equivalent) ++equivalent;
    } else if (verdict.error_class) {
      report.error_audit[*verdict.error_class]++;
    }
    token_sum += static_cast<double>(records[i].prompt_token_count);
  }
  report.execution_success_rate = static_cast<double>(successes) / static_cast<double>(report.n);
  report.semantic_overall = static_cast<double>(equivalent) / static_cast<double>(report.n);
  report.semantic_given_success =
      successes > 0 ? static_cast<double>(equivalent) / static_cast<double>(successes) : 0.0;
  report.mean_prompt_tokens = token_sum / static_cast<double>(report.n);
  if (config.baseline_mean_tokens) {
    report.token_reduction_vs_baseline =
        token_reduction(*config.baseline_mean_tokens, report.mean_prompt_tokens);
  }
  return report;
}

std::string prediction_to_json_line(const PredictionRecord& record) {
  json j = {
      {"question", record.question},
      {"predicted_sql", record.predicted_sql},
      {"gold_sql", record.gold_sql},
      {"prompt_kind", to_string(record.prompt_kind)},
      {"prompt_token_count", record.prompt_token_count},
  };
  return j.dump();
}

std::vector<PredictionRecord> load_predictions_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open predictions file: " + path.string());
  std::vector<PredictionRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      PredictionRecord record;
      record.question = j.at("question").get<std::string>();
      record.predicted_sql = j.at("predicted_sql").get<std::string>();
      record.gold_sql = j.at("gold_sql").get<std::string>();
      if (auto kind = prompt_kind_from_string(j.value("prompt_kind", "minimal"))) {
        record.prompt_kind = *kind;
      }
      record.prompt_token_count = j.value("prompt_token_count", 0LL);
      records.push_back(std::move(record));
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad prediction record: ") + e.what(), line_no);
    }
  }
  return records;
}

void write_predictions_file(const std::filesystem::path& path,
                            const std::vector<PredictionRecord>& records,
                            const std::string& catalog_fingerprint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write predictions file: " + path.string());
  for (const auto& record : records) out << prediction_to_json_line(record) << "\n";
  json manifest = {{"catalog_fingerprint", catalog_fingerprint},
                   {"n", static_cast<std::int64_t>(records.size())}};
  std::filesystem::path manifest_path = path;
  manifest_path += ".manifest.json";
  std::ofstream manifest_out(manifest_path, std::ios::binary | std::ios::trunc);
  manifest_out << manifest.dump(2) << "\n";
}

std::optional<std::string> read_predictions_manifest_fingerprint(
    const std::filesystem::path& predictions_path) {
  std::filesystem::path manifest_path = predictions_path;
  manifest_path += ".manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) return std::nullopt;
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.contains("catalog_fingerprint")) return std::nullopt;
  return j["catalog_fingerprint"].get<std::string>();
}

std::string report_to_json(const EvalReport& report) {
  json audit = json::object();
  for (const auto& [cls, count] : report.error_audit) audit[to_string(cls)] = count;
  json records = json::array();
  for (const auto& record : report.records) {
    json r = {
        {"executed", record.executed},
        {"oracle", {{"verdict", to_string(record.oracle.kind)},
                    {"evidence", record.oracle.evidence}}},
    };
    if (record.error_class) r["error_class"] = to_string(*record.error_class);
    if (record.judge) {
      r["judge"] = {{"verdict", to_string(record.judge->kind)},
                    {"evidence", record.judge->evidence}};
    }
    records.push_back(std::move(r));
  }
  json j = {
      {"n", report.n},
      {"execution_success_rate", report.execution_success_rate},
      {"semantic_overall", report.semantic_overall},
      {"semantic_given_success", report.semantic_given_success},
      {"mean_prompt_tokens", report.mean_prompt_tokens},
      {"error_audit", std::move(audit)},
      {"unjudged", report.unjudged},
      {"records", std::move(records)},
  };
  if (report.token_reduction_vs_baseline) {
    j["token_reduction_vs_baseline_pct"] = *report.token_reduction_vs_baseline;
  }
  if (report.judge_semantic_overall) {
    j["judge_semantic_overall"] = *report.judge_semantic_overall;
  }
  return j.dump(2);
}

std::string report_to_table(const EvalReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "metric                      value\n";
  out << "--------------------------  ----------\n";
  out << "records                     " << report.n << "\n";
  out << "execution success           " << report.execution_success_rate * 100.0 << "%\n";
  out << "semantic (overall)          " << report.semantic_overall * 100.0 << "%\n";
  out << "semantic (given success)    " << report.semantic_given_success * 100.0 << "%\n";
  out << "mean prompt tokens          " << report.mean_prompt_tokens << "\n";
  if (report.token_reduction_vs_baseline) {
    out << "token reduction vs baseline " << *report.token_reduction_vs_baseline << "%\n";
  }
  if (report.judge_semantic_overall) {
    out << "judge semantic (overall)    " << *report.judge_semantic_overall * 100.0 << "%\n";
  }
  if (report.unjudged > 0) {
    out << "unjudged records            " << report.unjudged << "\n";
  }
  if (!report.error_audit.empty()) {
    out << "\nerror audit (failed executions)\n";
    for (const auto& [cls, count] : report.error_audit) {
      out << "  " << std::left << std::setw(24) << to_string(cls) << count << "\n";
    }
  }
  return out.str();
}

void write_report_files(const std::filesystem::path& out_dir, const EvalReport& report) {
  std::filesystem::create_directories(out_dir);
  std::ofstream json_out(out_dir / "report.json", std::ios::binary | std::ios::trunc);
  json_out << report_to_json(report) << "\n";
  std::ofstream table_out(out_dir / "report.txt", std::ios::binary | std::ios::trunc);
  table_out << report_to_table(report);
}

}  // namespace forge
