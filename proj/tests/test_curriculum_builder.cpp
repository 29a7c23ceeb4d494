#include <doctest.h>

#include <set>

#include "forge/curriculum_builder.hpp"
#include "forge/errors.hpp"
#include "test_util.hpp"

using namespace forge;

namespace {

// Verified pairs straight from the fixture gold map; curriculum tests do not
// need the generation loop.
std::vector<GroundTruthPair> fixture_pairs(size_t limit = 0) {
  std::vector<GroundTruthPair> pairs;
  auto gold = testutil::fixture_gold_lookup();
  for (const auto& question : testutil::fixture_questions()) {
    GroundTruthPair pair;
    pair.question = question;
    pair.sql = gold.at(question);
    AttemptTrace trace;
    trace.outcome = AttemptOutcome::success;
    trace.extracted_sql = pair.sql;
    pair.attempts.push_back(trace);
    pairs.push_back(std::move(pair));
    if (limit && pairs.size() == limit) break;
  }
  return pairs;
}

std::string concat_lines(const std::vector<CurriculumExample>& examples) {
  std::string out;
  for (const auto& example : examples) out += example_to_json_line(example) + "\n";
  return out;
}

}  // namespace

TEST_CASE("phase 1 at desk scale reproduces the 16:3 mix exactly") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs();
  MixSpec mix = MixSpec::scaled(0.01, 42);
  CHECK(mix.sqlgen_count == 800);
  CHECK(mix.memorization_count == 150);
  CHECK(mix.phase2_count == 1500);

  CurriculumBuild phase1 = build_phase1(pairs, builder, mix);
  REQUIRE(phase1.examples.size() == 950);
  CHECK(phase1.excluded_over_budget == 0);

  std::int64_t sqlgen = 0, memorization = 0;
  for (const auto& example : phase1.examples) {
    CHECK(example.phase == 1);
    CHECK(example.context_budget == kPhase1ContextBudget);
    CHECK(example.messages.back().role == "assistant");
    if (example.task_type == TaskType::sql_generation) ++sqlgen;
    else ++memorization;
  }
  CHECK(sqlgen == 800);
  CHECK(memorization == 150);
  CHECK(memorization * 16 == sqlgen * 3);  // 150/800 == 15000/80000
}

TEST_CASE("memorization examples target the canonical schema text") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs(20);
  MixSpec mix;
  mix.sqlgen_count = 5;
  mix.memorization_count = 3;
  mix.seed = 1;
  CurriculumBuild phase1 = build_phase1(pairs, builder, mix);
  int memo_seen = 0;
  for (const auto& example : phase1.examples) {
    if (example.task_type != TaskType::schema_memorization) continue;
    ++memo_seen;
    REQUIRE(example.messages.size() == 2);
    CHECK(example.messages[0].role == "user");
    CHECK(example.messages[0].content ==
          "Give me full schema details for database_id = 'cricket_stats_db_v1'");
    CHECK(example.messages[1].content == builder.schema_text());
  }
  CHECK(memo_seen == 3);
}

TEST_CASE("the no-memorization ablation emits only sql_generation examples") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs(50);
  MixSpec mix;
  mix.sqlgen_count = 10;
  mix.memorization_count = 0;
  mix.variant = CurriculumVariant::no_memorization;
  mix.seed = 2;
  CurriculumBuild phase1 = build_phase1(pairs, builder, mix);
  CHECK(phase1.examples.size() == 10);
  for (const auto& example : phase1.examples) {
    CHECK(example.task_type == TaskType::sql_generation);
  }
}

TEST_CASE("mix validation enforces the ablation constraints") {
  MixSpec single;
  single.variant = CurriculumVariant::single_phase_only;
  single.sqlgen_count = 1;
  CHECK_THROWS_AS(single.validate(), ConfigError);

  MixSpec no_memo;
  no_memo.variant = CurriculumVariant::no_memorization;
  no_memo.memorization_count = 5;
  CHECK_THROWS_AS(no_memo.validate(), ConfigError);

  MixSpec negative;
  negative.sqlgen_count = -1;
  CHECK_THROWS_AS(negative.validate(), ConfigError);

  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs(5);
  MixSpec single_ok;
  single_ok.variant = CurriculumVariant::single_phase_only;
  CHECK_THROWS_AS(build_phase1(pairs, builder, single_ok), ConfigError);
  MixSpec empty_ok;
  CHECK_THROWS_AS(build_phase1({}, builder, empty_ok), EmptyPairSet);
  CHECK_THROWS_AS(build_phase2({}, builder, empty_ok), EmptyPairSet);
}

TEST_CASE("same-seed builds are byte-identical; different seeds differ") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs();
  MixSpec mix = MixSpec::scaled(0.01, 7);
  std::string a = concat_lines(build_phase1(pairs, builder, mix).examples);
  std::string b = concat_lines(build_phase1(pairs, builder, mix).examples);
  CHECK(a == b);
  MixSpec other = mix;
  other.seed = 8;
  CHECK(concat_lines(build_phase1(pairs, builder, other).examples) != a);
}

TEST_CASE("phase 2 resamples with replacement and stays under 100 prompt tokens") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs(50);
  MixSpec mix;
  mix.phase2_count = 1500;
  mix.seed = 3;
  CurriculumBuild phase2 = build_phase2(pairs, builder, mix);
  CHECK(phase2.examples.size() == 1500);
  CHECK(phase2.sampled_with_replacement);
  for (const auto& example : phase2.examples) {
    CHECK(example.phase == 2);
    CHECK(example.task_type == TaskType::sql_generation);
    CHECK(example.context_budget == kPhase2ContextBudget);
    REQUIRE(example.messages.size() == 2);
    CHECK(builder.count_tokens(example.messages[0].content) < 100);
    CHECK(example.messages[0].content.rfind("User Query: \"", 0) == 0);
  }
}

TEST_CASE("an empty phase 2 is a valid empty file with a manifest") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs(10);
  MixSpec mix;
  mix.phase2_count = 0;
  mix.sqlgen_count = 4;
  mix.memorization_count = 1;
  mix.seed = 4;
  auto dir = testutil::temp_dir("curriculum_empty_phase2");
  CurriculumManifest manifest = write_curriculum(dir, pairs, builder, mix);
  CHECK(manifest.phase2_emitted == 0);
  CHECK(std::filesystem::exists(dir / "phase2.jsonl"));
  CHECK(testutil::slurp(dir / "phase2.jsonl").empty());
  CHECK(std::filesystem::exists(dir / "manifest.json"));
}

TEST_CASE("no phase 2 example leaks schema text") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs();
  MixSpec mix;
  mix.phase2_count = 300;
  mix.seed = 5;
  CurriculumBuild phase2 = build_phase2(pairs, builder, mix);
  for (const auto& example : phase2.examples) {
    const std::string& user = example.messages[0].content;
    CHECK(user.find("CREATE TABLE") == std::string::npos);
    for (const auto& table : builder.catalog().tables) {
      // The rendered first column line of each table marks a schema leak.
      std::string fragment = "  " + table.columns[0].name + " ";
      CHECK(user.find(fragment) == std::string::npos);
      CHECK(user.find("PRIMARY KEY") == std::string::npos);
    }
  }
}

TEST_CASE("over-budget examples are excluded and counted, never truncated") {
  // Padding far past the phase-1 budget guarantees every full-context
  // example overflows 20,480 tokens.
  PromptBuilder oversized = testutil::fixture_prompt_builder(25000);
  auto pairs = fixture_pairs(10);
  MixSpec mix;
  mix.sqlgen_count = 6;
  mix.memorization_count = 2;
  mix.seed = 6;
  CurriculumBuild phase1 = build_phase1(pairs, oversized, mix);
  CHECK(phase1.excluded_over_budget == 6);  // memorization examples still fit
  CHECK(phase1.examples.size() == 2);
  for (const auto& example : phase1.examples) {
    CHECK(example.task_type == TaskType::schema_memorization);
  }
}

TEST_CASE("example ids are stable content digests") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs(5);
  MixSpec mix;
  mix.sqlgen_count = 5;
  mix.seed = 11;
  mix.variant = CurriculumVariant::no_memorization;
  CurriculumBuild a = build_phase1(pairs, builder, mix);
  CurriculumBuild b = build_phase1(pairs, builder, mix);
  for (size_t i = 0; i < a.examples.size(); ++i) {
    CHECK(a.examples[i].example_id == b.examples[i].example_id);
    CHECK(a.examples[i].example_id.size() == 64);
  }
}

TEST_CASE("holdout split partitions without overlap at the requested fraction") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs();  // 200
  auto [train, holdout] = split_holdout(pairs, 0.1, 12);
  CHECK(train.size() == 180);
  CHECK(holdout.size() == 20);
  std::set<std::string> train_questions, holdout_questions;
  for (const auto& pair : train) train_questions.insert(pair.question);
  for (const auto& pair : holdout) holdout_questions.insert(pair.question);
  for (const auto& question : holdout_questions) {
    CHECK(train_questions.count(question) == 0);
  }
  CHECK(train_questions.size() + holdout_questions.size() == 200);

  auto [train2, holdout2] = split_holdout(pairs, 0.1, 12);
  CHECK(train2.size() == train.size());
  for (size_t i = 0; i < holdout.size(); ++i) CHECK(holdout2[i].question == holdout[i].question);
}

TEST_CASE("three pairs at fraction 0.5 split deterministically into 1 and 2") {
  auto pairs = fixture_pairs(3);
  auto [train, holdout] = split_holdout(pairs, 0.5, 99);
  CHECK(((train.size() == 1 && holdout.size() == 2) ||
         (train.size() == 2 && holdout.size() == 1)));
  auto [train2, holdout2] = split_holdout(pairs, 0.5, 99);
  CHECK(train.size() == train2.size());
}

TEST_CASE("degenerate splits are rejected") {
  auto pairs = fixture_pairs(1);
  CHECK_THROWS_AS(split_holdout(pairs, 0.5, 1), DegenerateSplit);
  auto two = fixture_pairs(2);
  CHECK_THROWS_AS(split_holdout(two, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_holdout(two, 1.0, 1), ConfigError);
}

TEST_CASE("holdout questions never appear in emitted training files") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs();
  auto [train, holdout] = split_holdout(pairs, 0.15, 21);
  MixSpec mix = MixSpec::scaled(0.002, 21);  // 160 sqlgen / 30 memo / 300 phase2
  auto dir = testutil::temp_dir("curriculum_holdout");
  write_curriculum(dir, train, builder, mix, 0.002);
  std::string emitted = testutil::slurp(dir / "phase1.jsonl") +
                        testutil::slurp(dir / "phase2.jsonl");
  for (const auto& pair : holdout) {
    CHECK(emitted.find(pair.question) == std::string::npos);
  }
}

TEST_CASE("write_curriculum produces files per variant with exact manifest counts") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  auto pairs = fixture_pairs();

  auto two_phase_dir = testutil::temp_dir("curriculum_two_phase");
  CurriculumManifest two_phase =
      write_curriculum(two_phase_dir, pairs, builder, MixSpec::scaled(0.01, 50), 0.01);
  CHECK(two_phase.phase1_sqlgen_emitted == 800);
  CHECK(two_phase.phase1_memorization_emitted == 150);
  CHECK(two_phase.phase2_emitted == 1500);

  auto single_dir = testutil::temp_dir("curriculum_single");
  CurriculumManifest single = write_curriculum(
      single_dir, pairs, builder,
      MixSpec::scaled(0.01, 50, CurriculumVariant::single_phase_only), 0.01);
  CHECK(single.phase1_sqlgen_emitted == 0);
  CHECK(single.phase1_memorization_emitted == 0);
  CHECK(single.phase2_emitted == 1500);
  CHECK_FALSE(std::filesystem::exists(single_dir / "phase1.jsonl"));

  auto no_memo_dir = testutil::temp_dir("curriculum_no_memo");
  CurriculumManifest no_memo = write_curriculum(
      no_memo_dir, pairs, builder,
      MixSpec::scaled(0.01, 50, CurriculumVariant::no_memorization), 0.01);
  CHECK(no_memo.phase1_sqlgen_emitted == 800);
  CHECK(no_memo.phase1_memorization_emitted == 0);
  CHECK(no_memo.phase2_emitted == 1500);
}
