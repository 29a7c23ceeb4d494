// forge - text-to-SQL schema-internalization pipeline CLI.
//
// Subcommands: schema, gen-data, build-curriculum, evaluate, stats.
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 config error.
// Failures print one machine-parseable line: error: <category>: <message>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "forge/curriculum_builder.hpp"
#include "forge/datagen_loop.hpp"
#include "forge/errors.hpp"
#include "forge/evaluator.hpp"
#include "forge/run_config.hpp"

namespace {

using forge::RunConfig;
using nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;

std::vector<std::string> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw forge::ConfigError("cannot open corpus file: " + path.string());
  std::vector<std::string> questions;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) questions.push_back(line);
  }
  return questions;
}

struct CommonFlags {
  std::string config_file;
  std::string catalog;
  std::string context;
  std::string out_dir;
};

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig config;
  forge::apply_environment(config);
  if (!flags.config_file.empty()) forge::apply_config_file(config, flags.config_file);
  if (!flags.catalog.empty()) config.catalog_path = flags.catalog;
  if (!flags.context.empty()) config.context_path = flags.context;
  if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
  return config;
}

int cmd_schema(const CommonFlags& flags, bool render, bool show_fingerprint) {
  RunConfig config = resolve_config(flags);
  forge::SchemaCatalog catalog = forge::load_catalog_from_config(config);
  if (render) std::cout << forge::render_schema_text(catalog);
  if (show_fingerprint) std::cout << forge::fingerprint(catalog) << "\n";
  if (!render && !show_fingerprint) {
    std::cout << "ok: " << catalog.database_id << " (" << catalog.tables.size() << " tables)\n";
  }
  return 0;
}

int cmd_gen_data(RunConfig config) {
  if (config.corpus_path.empty()) throw forge::ConfigError("gen-data requires a corpus file");
  if (config.out_dir.empty()) throw forge::ConfigError("gen-data requires an output directory");

  forge::PromptBuilder prompts = forge::make_prompt_builder(config);
  std::unique_ptr<forge::Backend> backend = forge::make_backend(config);
  forge::ExecutorFactory executors = forge::make_executor_factory(config, prompts.catalog());

  forge::write_run_snapshot(config.out_dir, config, forge::fingerprint(prompts.catalog()));

  forge::LoopDeps deps{&prompts, backend.get(), executors};
  forge::LoopConfig loop;
  loop.max_attempts = config.max_attempts;
  loop.parallelism = config.parallelism;
  loop.seed = config.seed;
  loop.temperature = config.temperature;
  loop.max_output_tokens = config.max_output_tokens;
  loop.limits = config.limits;

  std::vector<std::string> questions = read_corpus(config.corpus_path);
  forge::CorpusRunResult run = forge::run_corpus(questions, deps, loop, config.out_dir);

  std::cout << "questions: " << run.stats.total_questions
            << "  retained: " << run.stats.retained << "  abandoned: " << run.stats.abandoned
            << "  duplicates_dropped: " << run.stats.duplicates_dropped << "\n";
  if (run.stats.aborted_on_budget) {
    std::cerr << "error: runtime: generation call budget exhausted; partial outputs kept in "
              << config.out_dir << "\n";
    return kExitRuntime;
  }
  return 0;
}

int cmd_build_curriculum(RunConfig config, const std::string& pairs_path) {
  if (pairs_path.empty()) throw forge::ConfigError("build-curriculum requires a pairs file");
  if (config.out_dir.empty()) {
    throw forge::ConfigError("build-curriculum requires an output directory");
  }
  auto variant = forge::curriculum_variant_from_string(config.curriculum_variant);
  if (!variant) throw forge::ConfigError("unknown variant '" + config.curriculum_variant + "'");

  forge::PromptBuilder prompts = forge::make_prompt_builder(config);
  std::vector<forge::GroundTruthPair> pairs = forge::load_pairs_file(pairs_path);
  if (pairs.empty()) throw forge::ConfigError("pairs file contains no records: " + pairs_path);

  forge::write_run_snapshot(config.out_dir, config, forge::fingerprint(prompts.catalog()));

  std::vector<forge::GroundTruthPair> train = pairs;
  if (config.holdout_fraction > 0.0 && pairs.size() >= 2) {
    auto [train_split, holdout] =
        forge::split_holdout(pairs, config.holdout_fraction, config.seed);
    train = std::move(train_split);
    std::ofstream holdout_out(std::filesystem::path(config.out_dir) / "holdout_pairs.jsonl",
                              std::ios::binary | std::ios::trunc);
    for (const auto& pair : holdout) holdout_out << forge::pair_to_json_line(pair) << "\n";
  }

  forge::MixSpec mix = forge::MixSpec::scaled(config.scale, config.seed, *variant);
  forge::CurriculumManifest manifest =
      forge::write_curriculum(config.out_dir, train, prompts, mix, config.scale);

  std::cout << "variant: " << forge::to_string(manifest.variant)
            << "  phase1_sqlgen: " << manifest.phase1_sqlgen_emitted
            << "  phase1_memorization: " << manifest.phase1_memorization_emitted
            << "  phase2: " << manifest.phase2_emitted
            << "  excluded_over_budget: " << manifest.excluded_over_budget << "\n";
  return 0;
}

int cmd_evaluate(RunConfig config, const std::string& preds_path) {
  if (preds_path.empty()) throw forge::ConfigError("evaluate requires a predictions file");

  forge::SchemaCatalog catalog = forge::load_catalog_from_config(config);
  std::vector<forge::PredictionRecord> records = forge::load_predictions_file(preds_path);
  if (records.empty()) throw forge::ConfigError("predictions file contains no records");

  forge::EvalConfig eval;
  eval.executor_factory = forge::make_executor_factory(config, catalog);
  eval.mode = *forge::eval_mode_from_string(config.eval_mode);
  eval.parallelism = config.eval_parallelism;
  eval.baseline_mean_tokens = config.baseline_mean_tokens;
  eval.expected_catalog_fingerprint = forge::fingerprint(catalog);
  eval.recorded_catalog_fingerprint = forge::read_predictions_manifest_fingerprint(preds_path);

  std::unique_ptr<forge::Backend> judge;
  if (eval.mode != forge::EvalMode::oracle) {
    judge = forge::make_backend(config);
    eval.judge_backend = judge.get();
  }

  forge::EvalReport report = forge::evaluate_corpus(records, eval);
  if (!config.out_dir.empty()) {
    forge::write_run_snapshot(config.out_dir, config, *eval.expected_catalog_fingerprint);
    forge::write_report_files(config.out_dir, report);
  }
  std::cout << forge::report_to_table(report);
  return 0;
}

int cmd_stats(const std::string& in_dir) {
  namespace fs = std::filesystem;
  bool printed = false;
  if (fs::exists(fs::path(in_dir) / "stats.json")) {
    std::ifstream in(fs::path(in_dir) / "stats.json");
    json j = json::parse(in, nullptr, false);
    if (!j.is_discarded()) {
      std::cout << "loop stats (" << in_dir << ")\n";
      std::cout << "  total_questions:    " << j.value("total_questions", 0) << "\n";
      std::cout << "  retained:           " << j.value("retained", 0) << "\n";
      std::cout << "  abandoned:          " << j.value("abandoned", 0) << "\n";
      std::cout << "  duplicates_dropped: " << j.value("duplicates_dropped", 0) << "\n";
      if (j.contains("attempts_histogram")) {
        std::cout << "  attempts histogram:\n";
        for (const auto& [k, v] : j["attempts_histogram"].items()) {
          std::cout << "    " << k << " attempt(s): " << v.get<long long>() << "\n";
        }
      }
      if (j.contains("error_class_counts") && !j["error_class_counts"].empty()) {
        std::cout << "  error classes:\n";
        for (const auto& [k, v] : j["error_class_counts"].items()) {
          std::cout << "    " << k << ": " << v.get<long long>() << "\n";
        }
      }
      printed = true;
    }
  }
  if (fs::exists(fs::path(in_dir) / "report.json")) {
    std::ifstream in(fs::path(in_dir) / "report.json");
    json j = json::parse(in, nullptr, false);
    if (!j.is_discarded()) {
      std::cout << "eval report (" << in_dir << ")\n";
      std::cout << "  n:                    " << j.value("n", 0) << "\n";
      std::cout << "  execution success:    " << j.value("execution_success_rate", 0.0) << "\n";
      std::cout << "  semantic overall:     " << j.value("semantic_overall", 0.0) << "\n";
      std::cout << "  semantic given success: " << j.value("semantic_given_success", 0.0) << "\n";
      std::cout << "  mean prompt tokens:   " << j.value("mean_prompt_tokens", 0.0) << "\n";
      printed = true;
    }
  }
  if (fs::exists(fs::path(in_dir) / "manifest.json")) {
    std::ifstream in(fs::path(in_dir) / "manifest.json");
    json j = json::parse(in, nullptr, false);
    if (!j.is_discarded()) {
      std::cout << "curriculum manifest (" << in_dir << ")\n" << j.dump(2) << "\n";
      printed = true;
    }
  }
  if (!printed) {
    throw forge::ConfigError("no stats.json, report.json or manifest.json under: " + in_dir);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge - text-to-SQL schema internalization pipeline"};
  app.require_subcommand(1);

  CommonFlags flags;
  bool opt_render = false, opt_fingerprint = false;
  std::string pairs_path, preds_path, stats_dir;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config_file, "JSON config file");
    cmd->add_option("--catalog", flags.catalog, "catalog file path");
    cmd->add_option("--context", flags.context, "domain context file path");
  };

  CLI::App* schema = app.add_subcommand("schema", "validate, render or fingerprint a catalog");
  add_common(schema);
  schema->add_flag("--render", opt_render, "print the canonical schema text");
  schema->add_flag("--fingerprint", opt_fingerprint, "print the catalog fingerprint");

  CLI::App* gen = app.add_subcommand("gen-data", "run the execution-verified data generation loop");
  add_common(gen);
  std::string gen_corpus;
  std::uint64_t gen_seed = 0;
  int gen_max_attempts = 0, gen_parallelism = 0;
  gen->add_option("--corpus", gen_corpus, "question corpus file (one question per line)");
  gen->add_option("--out", flags.out_dir, "output directory");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "run seed");
  auto* gen_attempts_opt = gen->add_option("--max-attempts", gen_max_attempts, "retry budget per question");
  auto* gen_par_opt = gen->add_option("--parallelism", gen_parallelism, "worker count");

  CLI::App* build = app.add_subcommand("build-curriculum", "compile training curricula from pairs");
  add_common(build);
  std::string build_variant;
  double build_scale = 0.0;
  std::uint64_t build_seed = 0;
  double build_holdout = -1.0;
  build->add_option("--pairs", pairs_path, "verified pairs JSONL file");
  build->add_option("--out", flags.out_dir, "output directory");
  auto* build_variant_opt = build->add_option(
      "--variant", build_variant, "two_phase | single_phase_only | no_memorization");
  auto* build_scale_opt = build->add_option("--scale", build_scale, "count scale factor");
  auto* build_seed_opt = build->add_option("--seed", build_seed, "shuffle/sample seed");
  auto* build_holdout_opt =
      build->add_option("--holdout-fraction", build_holdout, "holdout fraction (0 disables)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a predictions file");
  add_common(evaluate);
  std::string eval_mode;
  double eval_baseline = 0.0;
  evaluate->add_option("--preds", preds_path, "predictions JSONL file");
  evaluate->add_option("--out", flags.out_dir, "output directory for report files");
  auto* eval_mode_opt = evaluate->add_option("--mode", eval_mode, "oracle | judge | both");
  auto* eval_baseline_opt = evaluate->add_option("--baseline-mean-tokens", eval_baseline,
                                                 "baseline mean prompt tokens for reduction");

  CLI::App* stats = app.add_subcommand("stats", "summarize run artifacts in a directory");
  stats->add_option("--in", stats_dir, "artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    std::cerr << "error: usage: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (schema->parsed()) return cmd_schema(flags, opt_render, opt_fingerprint);

    RunConfig config = resolve_config(flags);
    if (gen->parsed()) {
      if (!gen_corpus.empty()) config.corpus_path = gen_corpus;
      if (*gen_seed_opt) config.seed = gen_seed;
      if (*gen_attempts_opt) config.max_attempts = gen_max_attempts;
      if (*gen_par_opt) config.parallelism = gen_parallelism;
      return cmd_gen_data(std::move(config));
    }
    if (build->parsed()) {
      if (*build_variant_opt) config.curriculum_variant = build_variant;
      if (*build_scale_opt) config.scale = build_scale;
      if (*build_seed_opt) config.seed = build_seed;
      if (*build_holdout_opt) config.holdout_fraction = build_holdout;
      return cmd_build_curriculum(std::move(config), pairs_path);
    }
    if (evaluate->parsed()) {
      if (*eval_mode_opt) config.eval_mode = eval_mode;
      if (*eval_baseline_opt) config.baseline_mean_tokens = eval_baseline;
      return cmd_evaluate(std::move(config), preds_path);
    }
    if (stats->parsed()) return cmd_stats(stats_dir);
  } catch (const forge::ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const forge::EngineUnavailable& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const forge::ParseError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const forge::ForgeError& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
