#include "forge/sql_executor.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "forge/digest.hpp"
#include "forge/errors.hpp"
#include "sql_lex.hpp"

namespace forge {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

struct Pattern {
  std::vector<std::string_view> needles;  // all must appear
  ErrorClass cls;
};

// Ordered pattern table; first full match wins. Messages harvested from
// SQLite, with the PostgreSQL shapes alongside for the external binding.
// Documented in docs/error_classes.md; pinned by tests.
const std::vector<Pattern>& pattern_table() {
  static const std::vector<Pattern> table = {
      {{"no such column"}, ErrorClass::unknown_column},
      {{"no such table"}, ErrorClass::unknown_relation},
      {{"column", "does not exist"}, ErrorClass::unknown_column},
      {{"relation", "does not exist"}, ErrorClass::unknown_relation},
      {{"table", "does not exist"}, ErrorClass::unknown_relation},
      {{"misuse of aggregate"}, ErrorClass::aggregate_misuse},
      {{"aggregate functions are not allowed"}, ErrorClass::aggregate_misuse},
      {{"aggregate function calls cannot be nested"}, ErrorClass::aggregate_misuse},
      {{"sub-select returns"}, ErrorClass::subquery_error},
      {{"more than one row returned by a subquery"}, ErrorClass::subquery_error},
      {{"subquery"}, ErrorClass::subquery_error},
      {{"datatype mismatch"}, ErrorClass::type_mismatch},
      {{"operator does not exist"}, ErrorClass::type_mismatch},
      {{"invalid input syntax for"}, ErrorClass::type_mismatch},
      {{"could not convert"}, ErrorClass::type_mismatch},
      {{"syntax error"}, ErrorClass::syntax},
      {{"incomplete input"}, ErrorClass::syntax},
      {{"unrecognized token"}, ErrorClass::syntax},
      {{"statement timeout"}, ErrorClass::timeout},
      {{"canceling statement due to"}, ErrorClass::timeout},
      {{"interrupted"}, ErrorClass::timeout},
      {{"query aborted: time limit"}, ErrorClass::timeout},
      {{"readonly database"}, ErrorClass::non_readonly_rejected},
      {{"read-only transaction"}, ErrorClass::non_readonly_rejected},
  };
  return table;
}

// Statement verbs that mutate data or schema; any occurrence outside string
// literals and comments rejects the statement before it reaches the engine.
const std::array<std::string_view, 22> kWriteVerbs = {
    "insert", "update", "delete",   "drop",    "alter",  "create",   "truncate", "replace",
    "merge",  "grant",  "revoke",   "attach",  "detach", "pragma",   "vacuum",   "reindex",
    "copy",   "call",   "begin",    "commit",  "rollback", "set",
};

std::optional<std::string> find_write_verb(std::string_view sql) {
  std::optional<std::string> hit;
  bool first = true;
  sqllex::scan(sql, [&](const sqllex::TokenEvent& ev) {
    if (first) {
      first = false;
      if (ev.token_lower != "select" && ev.token_lower != "with" && ev.token_lower != "explain" &&
          ev.token_lower != "values") {
        hit = ev.token_lower;
        return false;
      }
    }
    for (std::string_view verb : kWriteVerbs) {
      if (ev.token_lower == verb) {
        hit = ev.token_lower;
        return false;
      }
    }
    return true;
  });
  return hit;
}

struct TimeoutState {
  std::chrono::steady_clock::time_point deadline;
  bool fired = false;
};

int progress_callback(void* ctx) {
  auto* state = static_cast<TimeoutState*>(ctx);
  if (std::chrono::steady_clock::now() >= state->deadline) {
    state->fired = true;
    return 1;  // interrupt
  }
  return 0;
}

std::string format_double_9sig(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  std::string s(buf);
  if (s == "-0") s = "0";
  return s;
}

std::string canonical_cell(const Value& value) {
  const Value v = normalize_value(value);
  if (std::holds_alternative<std::monostate>(v)) return "_null";
  if (std::holds_alternative<std::int64_t>(v)) {
    return "num:" + format_double_9sig(static_cast<double>(std::get<std::int64_t>(v)));
  }
  if (std::holds_alternative<double>(v)) return "num:" + format_double_9sig(std::get<double>(v));
  if (std::holds_alternative<bool>(v)) return std::string("num:") + (std::get<bool>(v) ? "1" : "0");
  if (std::holds_alternative<Date>(v)) {
    const Date& d = std::get<Date>(v);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return std::string("date:") + buf;
  }
  return "txt:" + std::get<std::string>(v);
}

}  // namespace

std::string to_string(ErrorClass cls) {
  switch (cls) {
    case ErrorClass::syntax: return "syntax";
    case ErrorClass::unknown_relation: return "unknown_relation";
    case ErrorClass::unknown_column: return "unknown_column";
    case ErrorClass::type_mismatch: return "type_mismatch";
    case ErrorClass::aggregate_misuse: return "aggregate_misuse";
    case ErrorClass::subquery_error: return "subquery_error";
    case ErrorClass::timeout: return "timeout";
    case ErrorClass::non_readonly_rejected: return "non_readonly_rejected";
    case ErrorClass::other: return "other";
  }
  return "other";
}

std::optional<ErrorClass> error_class_from_string(std::string_view name) {
  static const std::vector<ErrorClass> all = {
      ErrorClass::syntax,           ErrorClass::unknown_relation, ErrorClass::unknown_column,
      ErrorClass::type_mismatch,    ErrorClass::aggregate_misuse, ErrorClass::subquery_error,
      ErrorClass::timeout,          ErrorClass::non_readonly_rejected, ErrorClass::other,
  };
  for (ErrorClass cls : all) {
    if (to_string(cls) == name) return cls;
  }
  return std::nullopt;
}

ErrorClass classify_error(std::string_view message) {
  const std::string haystack = lower(message);
  for (const auto& pattern : pattern_table()) {
    bool all = true;
    for (std::string_view needle : pattern.needles) {
      if (haystack.find(needle) == std::string::npos) {
        all = false;
        break;
      }
    }
    if (all) return pattern.cls;
  }
  return ErrorClass::other;
}

std::unique_ptr<SqliteEngine> SqliteEngine::from_scripts(const std::string& ddl_sql,
                                                         const std::string& seed_sql) {
  sqlite3* db = nullptr;
  if (sqlite3_open(":memory:", &db) != SQLITE_OK) {
    std::string msg = db ? sqlite3_errmsg(db) : "out of memory";
    sqlite3_close(db);
    throw ConfigError("cannot open in-memory database: " + msg);
  }
  auto engine = std::unique_ptr<SqliteEngine>(new SqliteEngine(db));
  char* err = nullptr;
  for (const std::string* script : {&ddl_sql, &seed_sql}) {
    if (script->empty()) continue;
    if (sqlite3_exec(db, script->c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown error";
      sqlite3_free(err);
      throw ConfigError("fixture materialization failed: " + msg);
    }
  }
  if (sqlite3_exec(db, "PRAGMA query_only = ON;", nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw ConfigError("cannot enable query-only mode: " + msg);
  }
  return engine;
}

std::unique_ptr<SqliteEngine> SqliteEngine::open_file(const std::filesystem::path& path) {
  sqlite3* db = nullptr;
  if (sqlite3_open_v2(path.string().c_str(), &db, SQLITE_OPEN_READONLY, nullptr) != SQLITE_OK) {
    std::string msg = db ? sqlite3_errmsg(db) : "out of memory";
    sqlite3_close(db);
    throw ConfigError("cannot open database file '" + path.string() + "': " + msg);
  }
  return std::unique_ptr<SqliteEngine>(new SqliteEngine(db));
}

SqliteEngine::~SqliteEngine() { sqlite3_close(static_cast<sqlite3*>(db_)); }

ExecOutcome SqliteEngine::run(const std::string& sql, const ExecLimits& limits) {
  auto* db = static_cast<sqlite3*>(db_);
  const auto started = std::chrono::steady_clock::now();

  TimeoutState timeout{started + std::chrono::milliseconds(limits.timeout_ms)};
  sqlite3_progress_handler(db, 500, progress_callback, &timeout);

  sqlite3_stmt* stmt = nullptr;
  int rc = sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt, nullptr);
  if (rc != SQLITE_OK) {
    std::string msg = sqlite3_errmsg(db);
    sqlite3_finalize(stmt);
    sqlite3_progress_handler(db, 0, nullptr, nullptr);
    if (timeout.fired) return ExecError{ErrorClass::timeout, "query interrupted: time limit exceeded", {}};
    return ExecError{classify_error(msg), msg, {}};
  }

  QueryResult result;
  const int ncol = sqlite3_column_count(stmt);
  result.column_names.reserve(ncol);
  for (int i = 0; i < ncol; ++i) {
    const char* name = sqlite3_column_name(stmt, i);
    result.column_names.emplace_back(name ? name : "");
  }

  while (true) {
    rc = sqlite3_step(stmt);
    if (rc == SQLITE_ROW) {
      if (static_cast<std::int64_t>(result.rows.size()) >= limits.max_rows) {
        result.truncated = true;
        break;
      }
      std::vector<Value> row;
      row.reserve(ncol);
      for (int i = 0; i < ncol; ++i) {
        switch (sqlite3_column_type(stmt, i)) {
          case SQLITE_INTEGER: row.emplace_back(static_cast<std::int64_t>(sqlite3_column_int64(stmt, i))); break;
          case SQLITE_FLOAT: row.emplace_back(sqlite3_column_double(stmt, i)); break;
          case SQLITE_NULL: row.emplace_back(std::monostate{}); break;
          default: {
            const unsigned char* text = sqlite3_column_text(stmt, i);
            int len = sqlite3_column_bytes(stmt, i);
            row.emplace_back(std::string(reinterpret_cast<const char*>(text), static_cast<size_t>(len)));
            break;
          }
        }
      }
      result.rows.push_back(std::move(row));
      continue;
    }
    if (rc == SQLITE_DONE) break;
    std::string msg = sqlite3_errmsg(db);
    sqlite3_finalize(stmt);
    sqlite3_progress_handler(db, 0, nullptr, nullptr);
    if (timeout.fired || rc == SQLITE_INTERRUPT) {
      return ExecError{ErrorClass::timeout, "query interrupted: time limit exceeded", {}};
    }
    return ExecError{classify_error(msg), msg, {}};
  }

  sqlite3_finalize(stmt);
  sqlite3_progress_handler(db, 0, nullptr, nullptr);
  result.row_count = static_cast<std::int64_t>(result.rows.size());
  result.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  return result;
}

SqlExecutor::SqlExecutor(std::unique_ptr<SqlEngine> engine, ExecLimits default_limits)
    : engine_(std::move(engine)), limits_(default_limits) {}

ExecOutcome SqlExecutor::execute(const std::string& sql) { return execute(sql, limits_); }

ExecOutcome SqlExecutor::execute(const std::string& sql, const ExecLimits& limits) {
  std::string_view trimmed = sql;
  while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front()))) {
    trimmed.remove_prefix(1);
  }
  if (trimmed.empty()) {
    return ExecError{ErrorClass::other, "empty statement", {}};
  }
  if (auto verb = find_write_verb(sql)) {
    std::string upper_verb = *verb;
    std::transform(upper_verb.begin(), upper_verb.end(), upper_verb.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return ExecError{ErrorClass::non_readonly_rejected,
                     "rejected by read-only guard: statement contains '" + upper_verb + "'",
                     upper_verb};
  }
  return engine_->run(sql, limits);
}

std::unique_ptr<SqlEngine> make_engine(const std::string& connection_string) {
  constexpr std::string_view kMemory = "sqlite::memory:";
  constexpr std::string_view kSqlite = "sqlite:";
  if (connection_string.rfind(kMemory, 0) == 0) {
    // sqlite::memory:?ddl=<path>&seed=<path>
    std::string ddl, seed;
    size_t q = connection_string.find('?');
    if (q != std::string::npos) {
      std::string params = connection_string.substr(q + 1);
      std::istringstream ss(params);
      std::string kv;
      while (std::getline(ss, kv, '&')) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) continue;
        std::string key = kv.substr(0, eq), path = kv.substr(eq + 1);
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot open script file: " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        if (key == "ddl") ddl = buf.str();
        else if (key == "seed") seed = buf.str();
        else throw ConfigError("unknown connection parameter '" + key + "'");
      }
    }
    return SqliteEngine::from_scripts(ddl, seed);
  }
  if (connection_string.rfind(kSqlite, 0) == 0) {
    return SqliteEngine::open_file(connection_string.substr(kSqlite.size()));
  }
  if (connection_string.rfind("postgres://", 0) == 0 ||
      connection_string.rfind("postgresql://", 0) == 0) {
    throw EngineUnavailable(
        "the PostgreSQL binding is not compiled into this build; use a sqlite: connection string");
  }
  throw ConfigError("unrecognized connection string: " + connection_string);
}

Value normalize_value(const Value& value) {
  if (std::holds_alternative<double>(value)) {
    // Round-trip through the 9-significant-digit representation.
    double rounded = 0.0;
    std::sscanf(format_double_9sig(std::get<double>(value)).c_str(), "%lf", &rounded);
    return rounded;
  }
  if (std::holds_alternative<std::string>(value)) {
    std::string s = std::get<std::string>(value);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
  }
  return value;
}

CanonicalResult canonicalize(const QueryResult& result, bool order_sensitive) {
  CanonicalResult canon;
  canon.rows.reserve(result.rows.size());
  for (const auto& row : result.rows) {
    std::vector<std::string> cells;
    cells.reserve(row.size());
    for (const auto& v : row) cells.push_back(canonical_cell(v));
    canon.rows.push_back(std::move(cells));
  }
  if (!order_sensitive) {
    std::sort(canon.rows.begin(), canon.rows.end());
  }
  std::ostringstream ser;
  ser << "rows=" << canon.rows.size() << ";";
  for (const auto& row : canon.rows) {
    ser << "r" << row.size() << ":";
    for (const auto& cell : row) ser << cell.size() << ":" << cell << ";";
  }
  canon.digest = sha256_hex(ser.str());
  return canon;
}

std::string data_checksum(SqlExecutor& executor, const SchemaCatalog& catalog) {
  std::ostringstream combined;
  for (const auto& table : catalog.tables) {
    ExecOutcome outcome = executor.execute("SELECT * FROM " + table.name,
                                           ExecLimits{60000, 1000000});
    if (std::holds_alternative<ExecError>(outcome)) {
      throw ForgeError("data checksum failed on table '" + table.name +
                       "': " + std::get<ExecError>(outcome).message);
    }
    CanonicalResult canon = canonicalize(std::get<QueryResult>(outcome), /*order_sensitive=*/false);
    combined << table.name << "=" << canon.digest << "\n";
  }
  return sha256_hex(combined.str());
}

}  // namespace forge
