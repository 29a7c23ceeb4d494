#include "forge/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "forge/errors.hpp"

namespace forge {

namespace {

using nlohmann::json;

std::string slurp_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(std::string("cannot open ") + what + ": " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void reject_unknown_keys(const json& object, std::initializer_list<std::string_view> known,
                         const std::string& scope) {
  for (const auto& [key, _] : object.items()) {
    bool ok = false;
    for (std::string_view k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("unknown config key '" + scope + key + "'");
  }
}

void apply_mock_section(RunConfig& config, const json& mock) {
  reject_unknown_keys(mock,
                      {"seed", "first_attempt_success_prob", "repair_success_prob",
                       "fault_palette", "gold_lookup", "gold_lookup_file",
                       "fallback_gold_template"},
                      "backend.mock.");
  if (mock.contains("seed")) config.mock.seed = mock["seed"].get<std::uint64_t>();
  if (mock.contains("first_attempt_success_prob")) {
    config.mock.first_attempt_success_prob = mock["first_attempt_success_prob"].get<double>();
  }
  if (mock.contains("repair_success_prob")) {
    config.mock.repair_success_prob = mock["repair_success_prob"].get<double>();
  }
  if (mock.contains("fault_palette")) {
    config.mock.fault_palette.clear();
    for (const auto& name : mock["fault_palette"]) {
      auto kind = fault_kind_from_string(name.get<std::string>());
      if (!kind) throw ConfigError("unknown fault kind '" + name.get<std::string>() + "'");
      config.mock.fault_palette.push_back(*kind);
    }
  }
  if (mock.contains("gold_lookup")) {
    for (const auto& [question, sql] : mock["gold_lookup"].items()) {
      config.mock.gold_lookup[question] = sql.get<std::string>();
    }
  }
  if (mock.contains("gold_lookup_file")) {
    config.gold_lookup_file = mock["gold_lookup_file"].get<std::string>();
  }
  if (mock.contains("fallback_gold_template")) {
    config.mock.fallback_gold_template = mock["fallback_gold_template"].get<std::string>();
  }
}

void apply_http_section(RunConfig& config, const json& http) {
  reject_unknown_keys(http,
                      {"base_url", "path", "model", "timeout_ms", "max_retries",
                       "retry_base_delay_ms", "max_in_flight", "api_key"},
                      "backend.http.");
  if (http.contains("api_key")) {
    throw ConfigError("backend.http.api_key is not allowed in config files; set FORGE_API_KEY");
  }
  if (http.contains("base_url")) config.http.base_url = http["base_url"].get<std::string>();
  if (http.contains("path")) config.http.path = http["path"].get<std::string>();
  if (http.contains("model")) config.http.model = http["model"].get<std::string>();
  if (http.contains("timeout_ms")) config.http.timeout_ms = http["timeout_ms"].get<int>();
  if (http.contains("max_retries")) config.http.max_retries = http["max_retries"].get<int>();
  if (http.contains("retry_base_delay_ms")) {
    config.http.retry_base_delay_ms = http["retry_base_delay_ms"].get<int>();
  }
  if (http.contains("max_in_flight")) config.http.max_in_flight = http["max_in_flight"].get<int>();
}

}  // namespace

void apply_environment(RunConfig& config) {
  if (const char* url = std::getenv("FORGE_ENDPOINT_URL")) config.http.base_url = url;
  if (const char* key = std::getenv("FORGE_API_KEY")) config.http.api_key = key;
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  json root = json::parse(slurp_file(path, "config file"), nullptr,
                          /*allow_exceptions=*/false);
  if (root.is_discarded() || !root.is_object()) {
    throw ConfigError("config file is not a JSON object: " + path.string());
  }
  reject_unknown_keys(root,
                      {"catalog", "context", "corpus", "out_dir", "tokenizer",
                       "full_context_pad_tokens", "backend", "executor", "loop", "curriculum",
                       "evaluation"},
                      "");

  if (root.contains("catalog")) config.catalog_path = root["catalog"].get<std::string>();
  if (root.contains("context")) config.context_path = root["context"].get<std::string>();
  if (root.contains("corpus")) config.corpus_path = root["corpus"].get<std::string>();
  if (root.contains("out_dir")) config.out_dir = root["out_dir"].get<std::string>();
  if (root.contains("tokenizer")) config.tokenizer_key = root["tokenizer"].get<std::string>();
  if (root.contains("full_context_pad_tokens")) {
    config.full_context_pad_tokens = root["full_context_pad_tokens"].get<long long>();
  }

  if (root.contains("backend")) {
    const json& backend = root["backend"];
    reject_unknown_keys(backend, {"type", "mock", "http", "call_budget"}, "backend.");
    if (backend.contains("type")) {
      config.backend_type = backend["type"].get<std::string>();
      if (config.backend_type != "mock" && config.backend_type != "http") {
        throw ConfigError("backend.type must be 'mock' or 'http'");
      }
    }
    if (backend.contains("mock")) apply_mock_section(config, backend["mock"]);
    if (backend.contains("http")) apply_http_section(config, backend["http"]);
    if (backend.contains("call_budget")) {
      config.call_budget = backend["call_budget"].get<std::int64_t>();
    }
  }

  if (root.contains("executor")) {
    const json& executor = root["executor"];
    reject_unknown_keys(executor, {"connection", "seed_sql", "timeout_ms", "max_rows"},
                        "executor.");
    if (executor.contains("connection")) {
      config.connection = executor["connection"].get<std::string>();
    }
    if (executor.contains("seed_sql")) config.seed_sql_path = executor["seed_sql"].get<std::string>();
    if (executor.contains("timeout_ms")) config.limits.timeout_ms = executor["timeout_ms"].get<int>();
    if (executor.contains("max_rows")) {
      config.limits.max_rows = executor["max_rows"].get<std::int64_t>();
    }
  }

  if (root.contains("loop")) {
    const json& loop = root["loop"];
    reject_unknown_keys(
        loop, {"max_attempts", "parallelism", "seed", "temperature", "max_output_tokens"},
        "loop.");
    if (loop.contains("max_attempts")) config.max_attempts = loop["max_attempts"].get<int>();
    if (loop.contains("parallelism")) config.parallelism = loop["parallelism"].get<int>();
    if (loop.contains("seed")) config.seed = loop["seed"].get<std::uint64_t>();
    if (loop.contains("temperature")) config.temperature = loop["temperature"].get<double>();
    if (loop.contains("max_output_tokens")) {
      config.max_output_tokens = loop["max_output_tokens"].get<int>();
    }
  }

  if (root.contains("curriculum")) {
    const json& curriculum = root["curriculum"];
    reject_unknown_keys(curriculum, {"scale", "variant", "holdout_fraction"}, "curriculum.");
    if (curriculum.contains("scale")) config.scale = curriculum["scale"].get<double>();
    if (curriculum.contains("variant")) {
      config.curriculum_variant = curriculum["variant"].get<std::string>();
      if (!curriculum_variant_from_string(config.curriculum_variant)) {
        throw ConfigError("unknown curriculum variant '" + config.curriculum_variant + "'");
      }
    }
    if (curriculum.contains("holdout_fraction")) {
      config.holdout_fraction = curriculum["holdout_fraction"].get<double>();
    }
  }

  if (root.contains("evaluation")) {
    const json& evaluation = root["evaluation"];
    reject_unknown_keys(evaluation, {"mode", "baseline_mean_tokens", "parallelism"},
                        "evaluation.");
    if (evaluation.contains("mode")) {
      config.eval_mode = evaluation["mode"].get<std::string>();
      if (!eval_mode_from_string(config.eval_mode)) {
        throw ConfigError("unknown evaluation mode '" + config.eval_mode + "'");
      }
    }
    if (evaluation.contains("baseline_mean_tokens")) {
      config.baseline_mean_tokens = evaluation["baseline_mean_tokens"].get<double>();
    }
    if (evaluation.contains("parallelism")) {
      config.eval_parallelism = evaluation["parallelism"].get<int>();
    }
  }
}

std::string run_config_to_json(const RunConfig& config) {
  json palette = json::array();
  for (FaultKind kind : config.mock.fault_palette) palette.push_back(to_string(kind));
  json gold_lookup = json::object();
  for (const auto& [question, sql] : config.mock.gold_lookup) gold_lookup[question] = sql;

  json j = {
      {"catalog", config.catalog_path},
      {"context", config.context_path},
      {"corpus", config.corpus_path},
      {"out_dir", config.out_dir},
      {"tokenizer", config.tokenizer_key},
      {"full_context_pad_tokens", config.full_context_pad_tokens},
      {"backend",
       {{"type", config.backend_type},
        {"call_budget", config.call_budget},
        {"mock",
         {{"seed", config.mock.seed},
          {"first_attempt_success_prob", config.mock.first_attempt_success_prob},
          {"repair_success_prob", config.mock.repair_success_prob},
          {"fault_palette", std::move(palette)},
          {"gold_lookup_file", config.gold_lookup_file},
          {"gold_lookup_inline_entries",
           static_cast<std::int64_t>(config.mock.gold_lookup.size())}}},
        {"http",
         {{"base_url", config.http.base_url},
          {"path", config.http.path},
          {"model", config.http.model},
          {"timeout_ms", config.http.timeout_ms},
          {"max_retries", config.http.max_retries},
          {"retry_base_delay_ms", config.http.retry_base_delay_ms},
          {"max_in_flight", config.http.max_in_flight},
          {"api_key", config.http.api_key.empty() ? "" : "<redacted>"}}}}},
      {"executor",
       {{"connection", config.connection},
        {"seed_sql", config.seed_sql_path},
        {"timeout_ms", config.limits.timeout_ms},
        {"max_rows", config.limits.max_rows}}},
      {"loop",
       {{"max_attempts", config.max_attempts},
        {"parallelism", config.parallelism},
        {"seed", config.seed},
        {"temperature", config.temperature},
        {"max_output_tokens", config.max_output_tokens}}},
      {"curriculum",
       {{"scale", config.scale},
        {"variant", config.curriculum_variant},
        {"holdout_fraction", config.holdout_fraction}}},
      {"evaluation",
       {{"mode", config.eval_mode},
        {"parallelism", config.eval_parallelism}}},
  };
  if (config.baseline_mean_tokens) {
    j["evaluation"]["baseline_mean_tokens"] = *config.baseline_mean_tokens;
  }
  if (config.mock.fallback_gold_template) {
    j["backend"]["mock"]["fallback_gold_template"] = *config.mock.fallback_gold_template;
  }
  return j.dump(2);
}

void write_run_snapshot(const std::filesystem::path& out_dir, const RunConfig& config,
                        const std::string& catalog_fingerprint) {
  std::filesystem::create_directories(out_dir);
  std::ofstream config_out(out_dir / "resolved_config.json", std::ios::binary | std::ios::trunc);
  config_out << run_config_to_json(config) << "\n";
  std::ofstream fp_out(out_dir / "catalog_fingerprint.txt", std::ios::binary | std::ios::trunc);
  fp_out << catalog_fingerprint << "\n";
}

SchemaCatalog load_catalog_from_config(const RunConfig& config) {
  return load_catalog_file(config.catalog_path);
}

PromptBuilder make_prompt_builder(const RunConfig& config) {
  SchemaCatalog catalog = load_catalog_from_config(config);
  DomainContext context = load_domain_context_file(config.context_path);
  PromptBuilder::Options options;
  options.full_context_pad_tokens = config.full_context_pad_tokens;
  return PromptBuilder(std::move(catalog), std::move(context),
                       Tokenizer::from_config_key(config.tokenizer_key), options);
}

std::unique_ptr<Backend> make_backend(const RunConfig& config) {
  std::unique_ptr<Backend> backend;
  if (config.backend_type == "mock") {
    MockBackendConfig mock = config.mock;
    if (!config.gold_lookup_file.empty()) {
      json gold = json::parse(slurp_file(config.gold_lookup_file, "gold lookup file"), nullptr,
                              /*allow_exceptions=*/false);
      if (gold.is_discarded() || !gold.is_object()) {
        throw ConfigError("gold lookup file is not a JSON object: " + config.gold_lookup_file);
      }
      for (const auto& [question, sql] : gold.items()) {
        mock.gold_lookup[question] = sql.get<std::string>();
      }
    }
    backend = std::make_unique<MockBackend>(std::move(mock));
  } else if (config.backend_type == "http") {
    backend = std::make_unique<HttpBackend>(config.http);
  } else {
    throw ConfigError("unknown backend type '" + config.backend_type + "'");
  }
  backend->set_call_budget(config.call_budget);
  return backend;
}

ExecutorFactory make_executor_factory(const RunConfig& config, const SchemaCatalog& catalog) {
  ExecLimits limits = config.limits;
  if (!config.connection.empty()) {
    std::string connection = config.connection;
    return [connection, limits]() {
      return std::make_unique<SqlExecutor>(make_engine(connection), limits);
    };
  }
  std::string ddl = render_schema_text(catalog);
  std::string seed_sql =
      config.seed_sql_path.empty() ? std::string() : slurp_file(config.seed_sql_path, "seed SQL");
  return [ddl, seed_sql, limits]() {
    return std::make_unique<SqlExecutor>(SqliteEngine::from_scripts(ddl, seed_sql), limits);
  };
}

}  // namespace forge
