// Acceptance suite: runs every gate criterion end to end against the bundled
// fixtures and prints one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/curriculum_builder.hpp"
#include "forge/datagen_loop.hpp"
#include "forge/evaluator.hpp"
#include "forge/llm_backend.hpp"
#include "forge/prompt_builder.hpp"
#include "forge/run_config.hpp"
#include "forge/schema_catalog.hpp"
#include "forge/sql_executor.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace forge;

struct Check {
  std::vector<std::string> failures;

  void expect(bool condition, const std::string& what) {
    if (!condition) failures.push_back(what);
  }
};

fs::path source_dir() { return FORGE_SOURCE_DIR; }
fs::path fixture(const std::string& name) { return source_dir() / "fixtures" / name; }

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

SchemaCatalog catalog() { return load_catalog_file(fixture("cricket_catalog.catalog")); }

PromptBuilder prompt_builder() {
  return PromptBuilder(catalog(), load_domain_context_file(fixture("cricket_context.context")),
                       Tokenizer::approx4());
}

std::unique_ptr<SqlExecutor> executor(ExecLimits limits = {}) {
  auto cat = catalog();
  return std::make_unique<SqlExecutor>(
      SqliteEngine::from_scripts(render_schema_text(cat), slurp(fixture("cricket_seed.sql"))),
      limits);
}

ExecutorFactory executor_factory() {
  return [] { return executor(); };
}

std::vector<std::string> questions() {
  std::ifstream in(fixture("cricket_questions.txt"));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::map<std::string, std::string> gold_lookup() {
  auto gold = json::parse(slurp(fixture("cricket_gold.json")));
  std::map<std::string, std::string> out;
  for (const auto& [q, sql] : gold.items()) out[q] = sql.get<std::string>();
  return out;
}

MockBackendConfig mock_config(double s, double p, std::uint64_t seed) {
  MockBackendConfig config;
  config.seed = seed;
  config.gold_lookup = gold_lookup();
  config.first_attempt_success_prob = s;
  config.repair_success_prob = p;
  config.fault_palette = {FaultKind::syntax_break, FaultKind::wrong_table,
                          FaultKind::wrong_column, FaultKind::aggregate_misuse};
  return config;
}

fs::path scratch(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("forge_acceptance_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  std::string command = std::string(FORGE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// --- criteria ---------------------------------------------------------------

// Full-context >= 15,000 tokens, every minimal prompt < 100 tokens,
// computed reduction > 99%.
void criterion_token_reduction(Check& check) {
  PromptBuilder builder = prompt_builder();
  RenderedPrompt full = builder.full_context("Highest batting average player in IPL?");
  check.expect(full.token_count >= 15000,
               "full-context prompt has " + std::to_string(full.token_count) + " tokens");

  double minimal_sum = 0.0;
  long long worst = 0;
  auto all = questions();
  for (const auto& question : all) {
    RenderedPrompt minimal = builder.minimal(question, "cricket_stats_db_v1");
    worst = std::max(worst, minimal.token_count);
    minimal_sum += static_cast<double>(minimal.token_count);
  }
  check.expect(worst < 100, "largest minimal prompt has " + std::to_string(worst) + " tokens");

  double reduction = token_reduction(static_cast<double>(full.token_count),
                                     minimal_sum / static_cast<double>(all.size()));
  check.expect(reduction > 99.0, "token reduction is " + std::to_string(reduction) + "%");

  RenderedPrompt again = builder.full_context("Highest batting average player in IPL?");
  check.expect(again.text == full.text, "full-context render is not deterministic");
}

// The two-line minimal prompt, exact bytes.
void criterion_minimal_fidelity(Check& check) {
  PromptBuilder builder = prompt_builder();
  RenderedPrompt prompt =
      builder.minimal("Highest batting average player in IPL?", "cricket_stats_db_v1");
  const std::string expected =
      "User Query: \"Highest batting average player in IPL?\"\n"
      "Generate SQL for user query using database_id: \"cricket_stats_db_v1\"";
  check.expect(prompt.text == expected, "minimal prompt text mismatch: [" + prompt.text + "]");
}

// Scale 1/100 reproduces 800/150/1500 with byte-identical same-seed reruns.
void criterion_curriculum_ratios(Check& check) {
  PromptBuilder builder = prompt_builder();
  auto gold = gold_lookup();
  std::vector<GroundTruthPair> pairs;
  for (const auto& question : questions()) {
    GroundTruthPair pair;
    pair.question = question;
    pair.sql = gold.at(question);
    pairs.push_back(std::move(pair));
  }

  fs::path dir_a = scratch("curriculum_a");
  fs::path dir_b = scratch("curriculum_b");
  MixSpec mix = MixSpec::scaled(0.01, 1234);
  CurriculumManifest manifest_a = write_curriculum(dir_a, pairs, builder, mix, 0.01);
  write_curriculum(dir_b, pairs, builder, mix, 0.01);

  check.expect(manifest_a.phase1_sqlgen_emitted == 800,
               "phase1 sqlgen count " + std::to_string(manifest_a.phase1_sqlgen_emitted));
  check.expect(manifest_a.phase1_memorization_emitted == 150,
               "phase1 memorization count " +
                   std::to_string(manifest_a.phase1_memorization_emitted));
  check.expect(manifest_a.phase2_emitted == 1500,
               "phase2 count " + std::to_string(manifest_a.phase2_emitted));
  check.expect(manifest_a.phase1_memorization_emitted * 16 ==
                   manifest_a.phase1_sqlgen_emitted * 3,
               "mix ratio is not exactly 16:3");

  json manifest_json = json::parse(slurp(dir_a / "manifest.json"));
  check.expect(manifest_json.at("emitted").at("phase1_sqlgen").get<int>() == 800,
               "manifest does not record exact sqlgen count");
  check.expect(manifest_json.at("emitted").at("phase2").get<int>() == 1500,
               "manifest does not record exact phase2 count");

  for (const char* file : {"phase1.jsonl", "phase2.jsonl", "manifest.json"}) {
    check.expect(slurp(dir_a / file) == slurp(dir_b / file),
                 std::string(file) + " differs between same-seed runs");
    check.expect(!slurp(dir_a / file).empty(), std::string(file) + " is empty");
  }
}

// Retention within +-2 points of 1-(1-s)(1-p)^(k-1) for s=p=0.5, k=3.
void criterion_retention_law(Check& check) {
  PromptBuilder builder = prompt_builder();
  MockBackendConfig config = mock_config(0.5, 0.5, 31337);
  config.fallback_gold_template = "SELECT '{q}' AS question_echo";
  MockBackend backend(config);
  LoopDeps deps{&builder, &backend, executor_factory()};
  LoopConfig loop;
  loop.max_attempts = 3;
  loop.parallelism = 4;
  loop.seed = 31337;

  std::vector<std::string> corpus;
  corpus.reserve(10000);
  for (int i = 0; i < 10000; ++i) {
    corpus.push_back("retention probe question " + std::to_string(i) + "?");
  }
  CorpusRunResult run = run_corpus(corpus, deps, loop);
  double retention =
      static_cast<double>(run.stats.retained) / static_cast<double>(run.stats.total_questions);
  check.expect(run.stats.total_questions == 10000, "corpus size mismatch");
  check.expect(retention >= 0.855 && retention <= 0.895,
               "retention " + std::to_string(retention) + " outside 0.875 +- 0.02");

  std::int64_t histogram_sum = 0;
  for (const auto& [attempts, count] : run.stats.attempts_histogram) histogram_sum += count;
  check.expect(histogram_sum == run.stats.total_questions, "attempts histogram does not sum");
}

// Every retained pair re-executes; the fixture data checksum is untouched.
void criterion_reverification(Check& check) {
  PromptBuilder builder = prompt_builder();
  MockBackend backend(mock_config(0.6, 0.5, 777));
  LoopDeps deps{&builder, &backend, executor_factory()};
  LoopConfig loop;
  loop.max_attempts = 3;
  loop.parallelism = 2;
  loop.seed = 777;

  auto verify_executor = executor();
  SchemaCatalog cat = catalog();
  std::string checksum_before = data_checksum(*verify_executor, cat);

  CorpusRunResult run = run_corpus(questions(), deps, loop);
  check.expect(run.stats.retained > 0, "no pairs retained");
  std::int64_t reexecuted = 0;
  for (const auto& pair : run.pairs) {
    ExecOutcome outcome = verify_executor->execute(pair.sql);
    if (std::holds_alternative<QueryResult>(outcome)) ++reexecuted;
  }
  check.expect(reexecuted == run.stats.retained,
               std::to_string(reexecuted) + "/" + std::to_string(run.stats.retained) +
                   " pairs re-executed");
  check.expect(data_checksum(*verify_executor, cat) == checksum_before,
               "fixture data checksum changed");
}

// One broken query per fault kind plus timeout and a write attempt, each
// mapping to its designated class; `other` only for the designed fallback.
void criterion_error_classifier(Check& check) {
  auto exec = executor(ExecLimits{60, 10000});
  auto gold = gold_lookup();
  const std::string base = gold.at("Who has the highest batting average?");

  auto classify_sql = [&](const std::string& sql) -> std::string {
    ExecOutcome outcome = exec->execute(sql);
    if (!std::holds_alternative<ExecError>(outcome)) return "<executed>";
    return to_string(std::get<ExecError>(outcome).error_class);
  };

  check.expect(classify_sql(apply_fault(base, FaultKind::syntax_break)) == "syntax",
               "syntax_break fault misclassified");
  check.expect(classify_sql(apply_fault(base, FaultKind::wrong_table)) == "unknown_relation",
               "wrong_table fault misclassified");
  check.expect(classify_sql(apply_fault(base, FaultKind::wrong_column)) == "unknown_column",
               "wrong_column fault misclassified");
  check.expect(classify_sql(apply_fault(base, FaultKind::aggregate_misuse)) == "aggregate_misuse",
               "aggregate_misuse fault misclassified");
  check.expect(classify_sql("WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) "
                            "SELECT COUNT(*) FROM c") == "timeout",
               "runaway query not classified as timeout");
  check.expect(classify_sql("DROP TABLE players") == "non_readonly_rejected",
               "write attempt not rejected");
  // Designed fallback: a novel message maps to other, and nothing else does.
  check.expect(classify_error("some novel engine text") == ErrorClass::other,
               "fallback case did not map to other");
}

// The hand-labeled 50-pair suite agrees with the oracle 50/50.
void criterion_oracle_agreement(Check& check) {
  auto exec = executor();
  auto labeled = json::parse(slurp(fixture("labeled_pairs.json")));
  check.expect(labeled.size() == 50, "labeled suite has " + std::to_string(labeled.size()));
  int agreed = 0;
  for (const auto& entry : labeled) {
    SemanticVerdict verdict = semantic_equivalent(entry.at("pred").get<std::string>(),
                                                  entry.at("gold").get<std::string>(), *exec);
    std::string got = to_string(verdict.kind);
    std::string want = entry.at("label").get<std::string>();
    if (got == want) {
      ++agreed;
    } else {
      check.expect(false, "oracle said " + got + ", label says " + want + " for [" +
                              entry.at("note").get<std::string>() + "]");
    }
  }
  check.expect(agreed == 50, std::to_string(agreed) + "/50 labels agreed");
}

// 956/1000 -> 95.6% and 984/1000 -> 98.4%, exactly.
void criterion_metric_arithmetic(Check& check) {
  auto exec = executor();
  auto make_records = [](int successes) {
    std::vector<PredictionRecord> records;
    records.reserve(1000);
    for (int i = 0; i < 1000; ++i) {
      PredictionRecord record;
      record.question = "q" + std::to_string(i);
      record.predicted_sql = i < successes ? "SELECT 1" : "SELECT FROM";
      record.gold_sql = "SELECT 1";
      records.push_back(std::move(record));
    }
    return records;
  };
  auto [rate_956, outcomes_956] = execution_success(make_records(956), *exec);
  check.expect(rate_956 == 0.956, "956/1000 computed as " + std::to_string(rate_956));
  auto [rate_984, outcomes_984] = execution_success(make_records(984), *exec);
  check.expect(rate_984 == 0.984, "984/1000 computed as " + std::to_string(rate_984));

  std::int64_t recount = 0;
  for (const auto& outcome : outcomes_956) {
    if (outcome.executed) ++recount;
  }
  check.expect(recount == 956, "double-entry recount mismatch");
}

// gen-data -> build-curriculum -> evaluate through the CLI with the identity
// mock: execution 1.0 and oracle semantic 1.0 on the holdout, byte-identical
// artifacts across same-seed reruns.
void criterion_end_to_end(Check& check) {
  fs::path work = scratch("pipeline");
  fs::path config_path = work / "config.json";
  {
    json config = {
        {"catalog", fixture("cricket_catalog.catalog").string()},
        {"context", fixture("cricket_context.context").string()},
        {"executor", {{"seed_sql", fixture("cricket_seed.sql").string()}}},
        {"backend",
         {{"type", "mock"},
          {"mock",
           {{"seed", 2026},
            {"gold_lookup_file", fixture("cricket_gold.json").string()}}}}},
        {"loop", {{"seed", 2026}, {"parallelism", 2}}},
        {"curriculum", {{"scale", 0.01}, {"holdout_fraction", 0.1}}},
    };
    std::ofstream out(config_path);
    out << config.dump(2) << "\n";
  }

  auto run_pipeline = [&](const fs::path& root) -> bool {
    fs::create_directories(root);
    int gen = run_cli("gen-data --config " + config_path.string() + " --corpus " +
                      fixture("cricket_questions.txt").string() + " --out " +
                      (root / "gen").string());
    if (gen != 0) return false;
    int build = run_cli("build-curriculum --config " + config_path.string() + " --pairs " +
                        (root / "gen" / "pairs.jsonl").string() + " --variant two_phase --seed " +
                        "2026 --out " + (root / "curriculum").string());
    if (build != 0) return false;

    // The deployed-model stand-in: the identity mock answers each holdout
    // question from a minimal prompt.
    PromptBuilder builder = prompt_builder();
    MockBackend model(mock_config(1.0, 1.0, 2026));
    auto holdout = load_pairs_file(root / "curriculum" / "holdout_pairs.jsonl");
    if (holdout.empty()) return false;
    std::vector<PredictionRecord> predictions;
    for (const auto& pair : holdout) {
      GenerationRequest request;
      request.prompt = builder.minimal(pair.question, "cricket_stats_db_v1");
      request.request_tag = "eval:" + pair.question;
      GenerationResponse response = model.generate(request);
      PredictionRecord record;
      record.question = pair.question;
      record.predicted_sql = extract_sql(response.raw_text).value_or("");
      record.gold_sql = pair.sql;
      record.prompt_kind = PromptKind::Minimal;
      record.prompt_token_count = request.prompt.token_count;
      predictions.push_back(std::move(record));
    }
    write_predictions_file(root / "preds.jsonl", predictions, fingerprint(catalog()));

    int evaluate = run_cli("evaluate --config " + config_path.string() + " --preds " +
                           (root / "preds.jsonl").string() + " --mode oracle --out " +
                           (root / "eval").string());
    return evaluate == 0;
  };

  check.expect(run_pipeline(work / "run_a"), "pipeline run A failed");
  check.expect(run_pipeline(work / "run_b"), "pipeline run B failed");

  json report = json::parse(slurp(work / "run_a" / "eval" / "report.json"));
  check.expect(report.at("execution_success_rate").get<double>() == 1.0,
               "identity-mock execution rate below 1.0");
  check.expect(report.at("semantic_overall").get<double>() == 1.0,
               "identity-mock oracle semantic rate below 1.0");

  for (const char* file :
       {"gen/pairs.jsonl", "gen/abandoned.jsonl", "gen/stats.json", "gen/done.txt",
        "curriculum/phase1.jsonl", "curriculum/phase2.jsonl", "curriculum/manifest.json",
        "curriculum/holdout_pairs.jsonl", "preds.jsonl", "eval/report.json", "eval/report.txt"}) {
    check.expect(slurp(work / "run_a" / file) == slurp(work / "run_b" / file),
                 std::string(file) + " differs between same-seed pipeline runs");
  }
}

// No phase-2 example and no minimal prompt contains the schema rendering.
void criterion_schema_leak_guard(Check& check) {
  fs::path dir = scratch("leak_guard");
  PromptBuilder builder = prompt_builder();
  auto gold = gold_lookup();
  std::vector<GroundTruthPair> pairs;
  for (const auto& question : questions()) {
    GroundTruthPair pair;
    pair.question = question;
    pair.sql = gold.at(question);
    pairs.push_back(std::move(pair));
  }
  write_curriculum(dir, pairs, builder, MixSpec::scaled(0.01, 55), 0.01);

  SchemaCatalog cat = catalog();
  std::vector<std::string> leak_markers = {"CREATE TABLE", "PRIMARY KEY ("};
  for (const auto& table : cat.tables) {
    leak_markers.push_back("  " + table.columns[0].name + " ");
  }

  // Scan every phase-2 user message.
  std::ifstream phase2(dir / "phase2.jsonl");
  std::string line;
  std::int64_t scanned = 0, leaks = 0;
  while (std::getline(phase2, line)) {
    if (line.empty()) continue;
    json example = json::parse(line);
    for (const auto& message : example.at("messages")) {
      if (message.at("role") != "user") continue;
      const std::string content = message.at("content").get<std::string>();
      for (const auto& marker : leak_markers) {
        if (content.find(marker) != std::string::npos) ++leaks;
      }
    }
    ++scanned;
  }
  check.expect(scanned == 1500, "expected 1500 phase-2 examples, scanned " +
                                    std::to_string(scanned));
  check.expect(leaks == 0, std::to_string(leaks) + " schema leaks in phase-2 examples");

  std::int64_t prompt_leaks = 0;
  for (const auto& question : questions()) {
    RenderedPrompt minimal = builder.minimal(question, "cricket_stats_db_v1");
    for (const auto& marker : leak_markers) {
      if (minimal.text.find(marker) != std::string::npos) ++prompt_leaks;
    }
  }
  check.expect(prompt_leaks == 0,
               std::to_string(prompt_leaks) + " schema leaks in minimal prompts");
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* name;
    std::function<void(Check&)> fn;
    long long time_budget_ms;  // 0 = unbounded
  };
  const std::vector<Criterion> criteria = {
      {1, "token-reduction reproduction", criterion_token_reduction, 1000},
      {2, "minimal-prompt fidelity", criterion_minimal_fidelity, 0},
      {3, "curriculum ratios", criterion_curriculum_ratios, 30000},
      {4, "loop retention law", criterion_retention_law, 120000},
      {5, "re-verification and fixture immutability", criterion_reverification, 0},
      {6, "error-classifier coverage", criterion_error_classifier, 0},
      {7, "semantic oracle agreement", criterion_oracle_agreement, 0},
      {8, "metric arithmetic", criterion_metric_arithmetic, 0},
      {9, "end-to-end determinism", criterion_end_to_end, 300000},
      {10, "schema-leak guard", criterion_schema_leak_guard, 0},
  };

  int failed = 0;
  for (const auto& criterion : criteria) {
    Check check;
    auto started = std::chrono::steady_clock::now();
    try {
      criterion.fn(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - started)
                       .count();
    if (criterion.time_budget_ms > 0) {
      check.expect(elapsed < criterion.time_budget_ms,
                   "runtime " + std::to_string(elapsed) + " ms exceeds the " +
                       std::to_string(criterion.time_budget_ms) + " ms budget");
    }
    if (check.failures.empty()) {
      std::printf("[PASS] criterion %2d: %s (%lld ms)\n", criterion.number, criterion.name,
                  static_cast<long long>(elapsed));
    } else {
      ++failed;
      std::printf("[FAIL] criterion %2d: %s (%lld ms)\n", criterion.number, criterion.name,
                  static_cast<long long>(elapsed));
      for (const auto& failure : check.failures) {
        std::printf("       - %s\n", failure.c_str());
      }
    }
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed;
}
