#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "forge/datagen_loop.hpp"
#include "forge/det_rng.hpp"
#include "forge/errors.hpp"
#include "forge/llm_backend.hpp"
#include "test_util.hpp"

using namespace forge;

namespace {

GenerationRequest minimal_request(const PromptBuilder& builder, const std::string& question,
                                  const std::string& tag) {
  GenerationRequest request;
  request.prompt = builder.minimal(question, "cricket_stats_db_v1");
  request.request_tag = tag;
  return request;
}

MockBackendConfig fixture_mock_config(double s, double p, std::uint64_t seed = 7) {
  MockBackendConfig config;
  config.seed = seed;
  config.gold_lookup = testutil::fixture_gold_lookup();
  config.first_attempt_success_prob = s;
  config.repair_success_prob = p;
  config.fault_palette = {FaultKind::syntax_break, FaultKind::wrong_table,
                          FaultKind::wrong_column, FaultKind::aggregate_misuse};
  return config;
}

}  // namespace

TEST_CASE("mock with s=1 echoes gold SQL for every fixture question") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  MockBackend backend(fixture_mock_config(1.0, 1.0));
  auto gold = testutil::fixture_gold_lookup();
  for (const auto& question : testutil::fixture_questions()) {
    GenerationResponse response = backend.generate(minimal_request(builder, question, "t"));
    CHECK(response.raw_text == gold.at(question));
    CHECK(response.finish_reason == FinishReason::stop);
  }
}

TEST_CASE("mock with s=0 and wrong_table palette always breaks the table reference") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  MockBackendConfig config = fixture_mock_config(0.0, 0.0);
  config.fault_palette = {FaultKind::wrong_table};
  MockBackend backend(config);
  auto executor = testutil::fixture_executor();
  int checked = 0;
  for (const auto& question : testutil::fixture_questions()) {
    GenerationResponse response = backend.generate(minimal_request(builder, question, "t"));
    auto outcome = executor->execute(response.raw_text);
    REQUIRE(std::holds_alternative<ExecError>(outcome));
    CHECK(std::get<ExecError>(outcome).error_class == ErrorClass::unknown_relation);
    if (++checked == 50) break;
  }
}

TEST_CASE("mock responses are a pure function of seed, tag and prompt") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  MockBackend a(fixture_mock_config(0.5, 0.5, 42));
  MockBackend b(fixture_mock_config(0.5, 0.5, 42));
  auto questions = testutil::fixture_questions();
  for (int i = 0; i < 1000; ++i) {
    const std::string& question = questions[i % questions.size()];
    std::string tag = "q" + std::to_string(i);
    GenerationResponse ra = a.generate(minimal_request(builder, question, tag));
    GenerationResponse rb = b.generate(minimal_request(builder, question, tag));
    CHECK(ra.raw_text == rb.raw_text);
  }
  MockBackend c(fixture_mock_config(0.5, 0.5, 43));
  int diff = 0;
  for (int i = 0; i < 200; ++i) {
    const std::string& question = questions[i % questions.size()];
    std::string tag = "q" + std::to_string(i);
    if (a.generate(minimal_request(builder, question, tag)).raw_text !=
        c.generate(minimal_request(builder, question, tag)).raw_text) {
      ++diff;
    }
  }
  CHECK(diff > 0);  // a different seed changes some outcomes
}

TEST_CASE("mock first-attempt gold fraction tracks s within two points over 10k calls") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  MockBackendConfig config = fixture_mock_config(0.37, 0.5, 99);
  config.fallback_gold_template = "SELECT '{q}' AS question_echo";
  MockBackend backend(config);
  const int n = 10000;
  int gold_hits = 0;
  for (int i = 0; i < n; ++i) {
    std::string question = "synthetic probe question number " + std::to_string(i) + "?";
    GenerationRequest request = minimal_request(builder, question, "p" + std::to_string(i));
    GenerationResponse response = backend.generate(request);
    std::string expected_gold = "SELECT '" + question + "' AS question_echo";
    if (response.raw_text == expected_gold) ++gold_hits;
  }
  double fraction = static_cast<double>(gold_hits) / n;
  CHECK(fraction > 0.35);
  CHECK(fraction < 0.39);
}

TEST_CASE("mock distinguishes amended prompts and uses the repair probability") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  MockBackendConfig config = fixture_mock_config(0.0, 1.0);
  MockBackend backend(config);
  auto gold = testutil::fixture_gold_lookup();
  const std::string question = "Who has the highest strike rate?";

  GenerationRequest first = minimal_request(builder, question, "t");
  CHECK(backend.generate(first).raw_text != gold.at(question));  // s = 0

  ExecError error{ErrorClass::unknown_relation, "no such table: zz_missing_table", {}};
  GenerationRequest repaired = first;
  repaired.prompt = amend_with_error(first.prompt, "SELECT 1", error, builder.tokenizer());
  CHECK(backend.generate(repaired).raw_text == gold.at(question));  // p = 1
}

TEST_CASE("every fault kind produces SQL failing with its designated class") {
  auto executor = testutil::fixture_executor();
  auto gold = testutil::fixture_gold_lookup();
  const struct {
    FaultKind kind;
    ErrorClass expected;
  } table[] = {
      {FaultKind::syntax_break, ErrorClass::syntax},
      {FaultKind::wrong_table, ErrorClass::unknown_relation},
      {FaultKind::wrong_column, ErrorClass::unknown_column},
      {FaultKind::aggregate_misuse, ErrorClass::aggregate_misuse},
  };
  int checked = 0;
  for (const auto& [question, sql] : gold) {
    for (const auto& row : table) {
      std::string broken = apply_fault(sql, row.kind);
      auto outcome = executor->execute(broken);
      REQUIRE_MESSAGE(std::holds_alternative<ExecError>(outcome),
                      to_string(row.kind), " left SQL executable: ", broken);
      CHECK_MESSAGE(std::get<ExecError>(outcome).error_class == row.expected,
                    to_string(row.kind), " on [", sql, "] -> ",
                    std::get<ExecError>(outcome).message);
    }
    if (++checked == 40) break;
  }
}

TEST_CASE("mock validates its configuration") {
  MockBackendConfig bad;
  bad.first_attempt_success_prob = 1.5;
  CHECK_THROWS_AS(MockBackend{bad}, ConfigError);
  MockBackendConfig no_palette;
  no_palette.first_attempt_success_prob = 0.5;
  no_palette.fault_palette.clear();
  CHECK_THROWS_AS(MockBackend{no_palette}, ConfigError);
}

TEST_CASE("call budget aborts with BudgetExceeded") {
  PromptBuilder builder = testutil::fixture_prompt_builder();
  MockBackend backend(fixture_mock_config(1.0, 1.0));
  backend.set_call_budget(5);
  const std::string question = "Who has the highest strike rate?";
  for (int i = 0; i < 5; ++i) {
    backend.generate(minimal_request(builder, question, "b" + std::to_string(i)));
  }
  CHECK_THROWS_AS(backend.generate(minimal_request(builder, question, "b5")), BudgetExceeded);
}

TEST_CASE("extract_sql pulls fenced blocks") {
  auto sql = extract_sql("```sql\nSELECT 1;\n```");
  REQUIRE(sql.has_value());
  CHECK(*sql == "SELECT 1;");
  auto plain_fence = extract_sql("```\nSELECT 2\n```");
  REQUIRE(plain_fence.has_value());
  CHECK(*plain_fence == "SELECT 2");
}

TEST_CASE("extract_sql anchors at the first SELECT/WITH keyword") {
  auto sql = extract_sql("Here is the query: WITH t AS (SELECT 1) SELECT * FROM t");
  REQUIRE(sql.has_value());
  CHECK(*sql == "WITH t AS (SELECT 1) SELECT * FROM t");
  auto select = extract_sql("Sure! SELECT COUNT(*) FROM players");
  REQUIRE(select.has_value());
  CHECK(*select == "SELECT COUNT(*) FROM players");
}

TEST_CASE("extract_sql ignores keyword fragments inside words") {
  CHECK_FALSE(extract_sql("The preselected WITHIN option").has_value());
  auto sql = extract_sql("preselected? no. SELECT 1");
  REQUIRE(sql.has_value());
  CHECK(*sql == "SELECT 1");
}

TEST_CASE("extract_sql returns nothing when no SQL is present") {
  CHECK_FALSE(extract_sql("I cannot answer").has_value());
  CHECK_FALSE(extract_sql("").has_value());
  CHECK_FALSE(extract_sql("``` \n nothing here \n ```").has_value());
}

TEST_CASE("extract_sql drops prose after the final semicolon") {
  auto sql = extract_sql("SELECT 1; hope this helps!");
  REQUIRE(sql.has_value());
  CHECK(*sql == "SELECT 1;");
  auto literal = extract_sql("SELECT 'a;b' AS v");
  REQUIRE(literal.has_value());
  CHECK(*literal == "SELECT 'a;b' AS v");
}

TEST_CASE("extract_sql is idempotent on its own successful output") {
  auto gold = testutil::fixture_gold_lookup();
  DetRng rng(555);
  const char* prefixes[] = {"", "Sure, here you go:\n", "The answer is below.\n\n"};
  const char* suffixes[] = {"", "\nHope this helps!", "; that query should work."};
  int trial = 0;
  for (const auto& [question, sql] : gold) {
    std::string wrapped = sql;
    switch (rng.next_below(3)) {
      case 0: wrapped = "```sql\n" + sql + "\n```"; break;
      case 1: wrapped = std::string(prefixes[rng.next_below(3)]) + sql +
                        suffixes[rng.next_below(3)]; break;
      default: break;
    }
    auto once = extract_sql(wrapped);
    REQUIRE(once.has_value());
    auto twice = extract_sql(*once);
    REQUIRE(twice.has_value());
    CHECK(*once == *twice);
    if (++trial == 60) break;
  }
}

TEST_CASE("http backend speaks the chat-completions protocol with retries") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    int hit = ++hits;
    auto body = nlohmann::json::parse(req.body);
    REQUIRE(body.at("messages").at(0).at("role") == "user");
    if (hit <= 2) {
      res.status = 500;  // first two calls fail, third succeeds
      res.set_content("overloaded", "text/plain");
      return;
    }
    CHECK(req.get_header_value("Authorization") == "Bearer test-key");
    nlohmann::json reply = {
        {"choices",
         {{{"message", {{"role", "assistant"}, {"content", "SELECT 42"}}},
           {"finish_reason", "stop"}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackendConfig config;
  config.base_url = "http://127.0.0.1:" + std::to_string(port);
  config.model = "test-model";
  config.api_key = "test-key";
  config.max_retries = 3;
  config.retry_base_delay_ms = 1;
  HttpBackend backend(config);

  PromptBuilder builder = testutil::fixture_prompt_builder();
  GenerationRequest request = minimal_request(builder, "Who has the highest strike rate?", "h1");
  GenerationResponse response = backend.generate(request);
  CHECK(response.finish_reason == FinishReason::stop);
  CHECK(response.raw_text == "SELECT 42");
  CHECK(hits.load() == 3);

  server.stop();
  server_thread.join();
}

TEST_CASE("http backend surfaces auth failures and exhausted retries") {
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.status = 401;
    res.set_content("bad key", "text/plain");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackendConfig config;
  config.base_url = "http://127.0.0.1:" + std::to_string(port);
  config.model = "test-model";
  config.max_retries = 0;
  HttpBackend backend(config);
  PromptBuilder builder = testutil::fixture_prompt_builder();
  CHECK_THROWS_AS(
      backend.generate(minimal_request(builder, "Who has the highest strike rate?", "h2")),
      AuthError);
  server.stop();
  server_thread.join();

  // No listener at all: transport retries exhaust into finish_reason=error.
  HttpBackendConfig dead;
  dead.base_url = "http://127.0.0.1:9";  // discard port, nothing listens
  dead.model = "test-model";
  dead.max_retries = 1;
  dead.retry_base_delay_ms = 1;
  dead.timeout_ms = 300;
  HttpBackend dead_backend(dead);
  GenerationResponse failed =
      dead_backend.generate(minimal_request(builder, "Who has the highest strike rate?", "h3"));
  CHECK(failed.finish_reason == FinishReason::error);
  CHECK(failed.raw_text.find("[transport-error]") != std::string::npos);
}
