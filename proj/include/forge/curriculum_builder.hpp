#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "forge/datagen_loop.hpp"
#include "forge/prompt_builder.hpp"

namespace forge {

enum class CurriculumVariant { two_phase, single_phase_only, no_memorization };
enum class TaskType { sql_generation, schema_memorization };

std::string to_string(CurriculumVariant variant);
std::optional<CurriculumVariant> curriculum_variant_from_string(std::string_view name);
std::string to_string(TaskType task);

inline constexpr long long kPhase1ContextBudget = 20480;
inline constexpr long long kPhase2ContextBudget = 1024;

// Paper-scale counts; a builder scale factor shrinks them proportionally.
inline constexpr long long kFullScaleSqlGenCount = 80000;
inline constexpr long long kFullScaleMemorizationCount = 15000;
inline constexpr long long kFullScalePhase2Count = 150000;

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
};

// One chat-formatted training record. The last message is always the
// assistant target; over-budget examples are excluded, never truncated.
struct CurriculumExample {
  std::vector<ChatMessage> messages;
  int phase = 1;
  TaskType task_type = TaskType::sql_generation;
  std::string database_id;
  long long context_budget = kPhase1ContextBudget;
  std::string example_id;  // content digest
};

struct MixSpec {
  long long sqlgen_count = 0;
  long long memorization_count = 0;
  long long phase2_count = 0;
  std::uint64_t seed = 0;
  CurriculumVariant variant = CurriculumVariant::two_phase;

  // Paper counts scaled by `scale` (e.g. 0.01 for the desk default).
  static MixSpec scaled(double scale, std::uint64_t seed,
                        CurriculumVariant variant = CurriculumVariant::two_phase);

  void validate() const;  // throws ConfigError on variant/count conflicts
};

struct CurriculumBuild {
  std::vector<CurriculumExample> examples;
  long long excluded_over_budget = 0;
  bool sampled_with_replacement = false;
};

// Phase 1: full-context SQL-generation examples mixed with explicit
// schema-memorization examples, interleaved by a seeded uniform shuffle.
CurriculumBuild build_phase1(const std::vector<GroundTruthPair>& pairs,
                             const PromptBuilder& prompts, const MixSpec& mix);

// Phase 2: minimal-prompt SQL-generation examples only; no schema text
// appears in any user message.
CurriculumBuild build_phase2(const std::vector<GroundTruthPair>& pairs,
                             const PromptBuilder& prompts, const MixSpec& mix);

// Disjoint train/holdout partition by seeded shuffle of unique question
// texts. Holdout size is round(n * holdout_fraction), within +-1 of exact.
std::pair<std::vector<GroundTruthPair>, std::vector<GroundTruthPair>> split_holdout(
    const std::vector<GroundTruthPair>& pairs, double holdout_fraction, std::uint64_t seed);

std::string example_to_json_line(const CurriculumExample& example);

struct CurriculumManifest {
  CurriculumVariant variant = CurriculumVariant::two_phase;
  MixSpec mix;
  double scale = 1.0;
  std::string catalog_fingerprint;
  long long phase1_sqlgen_emitted = 0;
  long long phase1_memorization_emitted = 0;
  long long phase2_emitted = 0;
  long long excluded_over_budget = 0;
  bool sampled_with_replacement = false;
};

// Writes phase1.jsonl / phase2.jsonl (per variant) plus manifest.json into
// out_dir. Returns the manifest. Byte-identical across same-seed runs.
CurriculumManifest write_curriculum(const std::filesystem::path& out_dir,
                                    const std::vector<GroundTruthPair>& pairs,
                                    const PromptBuilder& prompts, const MixSpec& mix,
                                    double scale_for_manifest = 1.0);

}  // namespace forge
