#include "forge/curriculum_builder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "forge/det_rng.hpp"
#include "forge/digest.hpp"
#include "forge/errors.hpp"

namespace forge {

namespace {

using nlohmann::json;

DetRng subkey_rng(std::uint64_t seed, std::string_view label) {
  return DetRng(splitmix64(seed) ^ fnv1a64(label));
}

// Deterministic sample of `count` pair indices: a seeded shuffle prefix when
// supply is sufficient, otherwise independent draws with replacement.
std::vector<size_t> sample_indices(size_t supply, long long count, DetRng& rng,
                                   bool* with_replacement) {
  std::vector<size_t> out;
  if (count <= 0) return out;
  out.reserve(static_cast<size_t>(count));
  if (static_cast<size_t>(count) <= supply) {
    std::vector<size_t> all(supply);
    std::iota(all.begin(), all.end(), size_t{0});
    det_shuffle(all, rng);
    out.assign(all.begin(), all.begin() + static_cast<size_t>(count));
  } else {
    if (with_replacement) *with_replacement = true;
    for (long long i = 0; i < count; ++i) {
      out.push_back(static_cast<size_t>(rng.next_below(supply)));
    }
  }
  return out;
}

long long message_tokens(const CurriculumExample& example, const PromptBuilder& prompts) {
  long long total = 0;
  for (const auto& message : example.messages) total += prompts.count_tokens(message.content);
  return total;
}

std::string compute_example_id(const CurriculumExample& example) {
  std::ostringstream content;
  content << "phase=" << example.phase << ";task=" << to_string(example.task_type)
          << ";db=" << example.database_id << ";";
  for (const auto& message : example.messages) {
    content << message.role << ":" << message.content.size() << ":" << message.content << ";";
  }
  return sha256_hex(content.str());
}

CurriculumExample make_sqlgen_example(const GroundTruthPair& pair, const PromptBuilder& prompts,
                                      int phase) {
  CurriculumExample example;
  example.phase = phase;
  example.task_type = TaskType::sql_generation;
  example.database_id = prompts.catalog().database_id;
  example.context_budget = phase == 1 ? kPhase1ContextBudget : kPhase2ContextBudget;
  RenderedPrompt prompt = phase == 1
                              ? prompts.full_context(pair.question)
                              : prompts.minimal(pair.question, prompts.catalog().database_id);
  example.messages = {{"user", prompt.text}, {"assistant", pair.sql}};
  example.example_id = compute_example_id(example);
  return example;
}

CurriculumExample make_memorization_example(const PromptBuilder& prompts) {
  CurriculumExample example;
  example.phase = 1;
  example.task_type = TaskType::schema_memorization;
  example.database_id = prompts.catalog().database_id;
  example.context_budget = kPhase1ContextBudget;
  auto [prompt, completion] = prompts.memorization(prompts.catalog().database_id);
  example.messages = {{"user", prompt.text}, {"assistant", completion}};
  example.example_id = compute_example_id(example);
  return example;
}

}  // namespace

std::string to_string(CurriculumVariant variant) {
  switch (variant) {
    case CurriculumVariant::two_phase: return "two_phase";
    case CurriculumVariant::single_phase_only: return "single_phase_only";
    case CurriculumVariant::no_memorization: return "no_memorization";
  }
  return "two_phase";
}

std::optional<CurriculumVariant> curriculum_variant_from_string(std::string_view name) {
  if (name == "two_phase") return CurriculumVariant::two_phase;
  if (name == "single_phase_only") return CurriculumVariant::single_phase_only;
  if (name == "no_memorization") return CurriculumVariant::no_memorization;
  return std::nullopt;
}

std::string to_string(TaskType task) {
  return task == TaskType::sql_generation ? "sql_generation" : "schema_memorization";
}

MixSpec MixSpec::scaled(double scale, std::uint64_t seed, CurriculumVariant variant) {
  if (scale <= 0.0) throw ConfigError("curriculum scale must be positive");
  MixSpec mix;
  mix.seed = seed;
  mix.variant = variant;
  mix.sqlgen_count = std::llround(static_cast<double>(kFullScaleSqlGenCount) * scale);
  mix.memorization_count = std::llround(static_cast<double>(kFullScaleMemorizationCount) * scale);
  mix.phase2_count = std::llround(static_cast<double>(kFullScalePhase2Count) * scale);
  if (variant == CurriculumVariant::single_phase_only) {
    mix.sqlgen_count = 0;
    mix.memorization_count = 0;
  } else if (variant == CurriculumVariant::no_memorization) {
    mix.memorization_count = 0;
  }
  return mix;
}

void MixSpec::validate() const {
  if (sqlgen_count < 0 || memorization_count < 0 || phase2_count < 0) {
    throw ConfigError("curriculum mix counts must be >= 0");
  }
  if (variant == CurriculumVariant::single_phase_only &&
      (sqlgen_count != 0 || memorization_count != 0)) {
    throw ConfigError("single_phase_only forbids phase-1 examples");
  }
  if (variant == CurriculumVariant::no_memorization && memorization_count != 0) {
    throw ConfigError("no_memorization forbids memorization examples");
  }
}

CurriculumBuild build_phase1(const std::vector<GroundTruthPair>& pairs,
                             const PromptBuilder& prompts, const MixSpec& mix) {
  mix.validate();
  if (mix.variant == CurriculumVariant::single_phase_only) {
    throw ConfigError("single_phase_only has no phase-1 dataset");
  }
  if (pairs.empty()) throw EmptyPairSet();

  CurriculumBuild build;
  DetRng sample_rng = subkey_rng(mix.seed, "phase1.sample");
  std::vector<size_t> chosen =
      sample_indices(pairs.size(), mix.sqlgen_count, sample_rng, &build.sampled_with_replacement);

  std::vector<CurriculumExample> examples;
  examples.reserve(static_cast<size_t>(mix.sqlgen_count + mix.memorization_count));
  for (size_t index : chosen) {
    examples.push_back(make_sqlgen_example(pairs[index], prompts, /*phase=*/1));
  }
  if (mix.memorization_count > 0) {
    CurriculumExample memo = make_memorization_example(prompts);
    for (long long i = 0; i < mix.memorization_count; ++i) examples.push_back(memo);
  }

  DetRng shuffle_rng = subkey_rng(mix.seed, "phase1.shuffle");
  det_shuffle(examples, shuffle_rng);

  build.examples.reserve(examples.size());
  for (auto& example : examples) {
    if (message_tokens(example, prompts) > example.context_budget) {
      ++build.excluded_over_budget;
      continue;
    }
    build.examples.push_back(std::move(example));
  }
  return build;
}

CurriculumBuild build_phase2(const std::vector<GroundTruthPair>& pairs,
                             const PromptBuilder& prompts, const MixSpec& mix) {
  mix.validate();
  if (pairs.empty()) throw EmptyPairSet();

  CurriculumBuild build;
  DetRng sample_rng = subkey_rng(mix.seed, "phase2.sample");
  std::vector<size_t> chosen =
      sample_indices(pairs.size(), mix.phase2_count, sample_rng, &build.sampled_with_replacement);

  std::vector<CurriculumExample> examples;
  examples.reserve(chosen.size());
  for (size_t index : chosen) {
    examples.push_back(make_sqlgen_example(pairs[index], prompts, /*phase=*/2));
  }
  DetRng shuffle_rng = subkey_rng(mix.seed, "phase2.shuffle");
  det_shuffle(examples, shuffle_rng);

  build.examples.reserve(examples.size());
  for (auto& example : examples) {
    if (message_tokens(example, prompts) > example.context_budget) {
      ++build.excluded_over_budget;
      continue;
    }
    build.examples.push_back(std::move(example));
  }
  return build;
}

std::pair<std::vector<GroundTruthPair>, std::vector<GroundTruthPair>> split_holdout(
    const std::vector<GroundTruthPair>& pairs, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout_fraction must lie strictly between 0 and 1");
  }
  // Partition unique question texts, first occurrence wins.
  std::vector<const GroundTruthPair*> unique;
  std::set<std::string_view> seen;
  for (const auto& pair : pairs) {
    if (seen.insert(pair.question).second) unique.push_back(&pair);
  }
  if (unique.size() < 2) throw DegenerateSplit("holdout split needs at least 2 unique pairs");

  std::vector<size_t> order(unique.size());
  std::iota(order.begin(), order.end(), size_t{0});
  DetRng rng = subkey_rng(seed, "holdout.split");
  det_shuffle(order, rng);

  auto holdout_size = static_cast<size_t>(
      std::llround(static_cast<double>(unique.size()) * holdout_fraction));
  holdout_size = std::min(holdout_size, unique.size());

  std::vector<GroundTruthPair> train, holdout;
  train.reserve(unique.size() - holdout_size);
  holdout.reserve(holdout_size);
  for (size_t i = 0; i < order.size(); ++i) {
    if (i < holdout_size) holdout.push_back(*unique[order[i]]);
    else train.push_back(*unique[order[i]]);
  }
  return {std::move(train), std::move(holdout)};
}

std::string example_to_json_line(const CurriculumExample& example) {
  json messages = json::array();
  for (const auto& message : example.messages) {
    messages.push_back({{"role", message.role}, {"content", message.content}});
  }
  json j = {
      {"messages", std::move(messages)},
      {"phase", example.phase},
      {"task_type", to_string(example.task_type)},
      {"database_id", example.database_id},
      {"context_budget", example.context_budget},
      {"example_id", example.example_id},
  };
  return j.dump();
}

CurriculumManifest write_curriculum(const std::filesystem::path& out_dir,
                                    const std::vector<GroundTruthPair>& pairs,
                                    const PromptBuilder& prompts, const MixSpec& mix,
                                    double scale_for_manifest) {
  mix.validate();
  std::filesystem::create_directories(out_dir);

  CurriculumManifest manifest;
  manifest.variant = mix.variant;
  manifest.mix = mix;
  manifest.scale = scale_for_manifest;
  manifest.catalog_fingerprint = fingerprint(prompts.catalog());

  if (mix.variant != CurriculumVariant::single_phase_only) {
    CurriculumBuild phase1 = build_phase1(pairs, prompts, mix);
    std::ofstream out(out_dir / "phase1.jsonl", std::ios::binary | std::ios::trunc);
    for (const auto& example : phase1.examples) {
      out << example_to_json_line(example) << "\n";
      if (example.task_type == TaskType::sql_generation) ++manifest.phase1_sqlgen_emitted;
      else ++manifest.phase1_memorization_emitted;
    }
    manifest.excluded_over_budget += phase1.excluded_over_budget;
    manifest.sampled_with_replacement |= phase1.sampled_with_replacement;
  }

  {
    CurriculumBuild phase2 = build_phase2(pairs, prompts, mix);
    std::ofstream out(out_dir / "phase2.jsonl", std::ios::binary | std::ios::trunc);
    for (const auto& example : phase2.examples) {
      out << example_to_json_line(example) << "\n";
      ++manifest.phase2_emitted;
    }
    manifest.excluded_over_budget += phase2.excluded_over_budget;
    manifest.sampled_with_replacement |= phase2.sampled_with_replacement;
  }

  json j = {
      {"variant", to_string(mix.variant)},
      {"seed", mix.seed},
      {"scale", manifest.scale},
      {"catalog_fingerprint", manifest.catalog_fingerprint},
      {"requested",
       {{"sqlgen_count", mix.sqlgen_count},
        {"memorization_count", mix.memorization_count},
        {"phase2_count", mix.phase2_count}}},
      {"emitted",
       {{"phase1_sqlgen", manifest.phase1_sqlgen_emitted},
        {"phase1_memorization", manifest.phase1_memorization_emitted},
        {"phase2", manifest.phase2_emitted}}},
      {"excluded_over_budget", manifest.excluded_over_budget},
      {"sampled_with_replacement", manifest.sampled_with_replacement},
      {"context_budgets", {{"phase1", kPhase1ContextBudget}, {"phase2", kPhase2ContextBudget}}},
  };
  std::ofstream manifest_out(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
  manifest_out << j.dump(2) << "\n";
  return manifest;
}

}  // namespace forge
