#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "forge/schema_catalog.hpp"

namespace forge {

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;
  auto operator<=>(const Date&) const = default;
};

// Result cell. The sandbox engine produces null/integer/decimal/text;
// boolean and date arise from engines with typed columns.
using Value = std::variant<std::monostate, std::int64_t, double, std::string, bool, Date>;

struct QueryResult {
  std::vector<std::string> column_names;
  std::vector<std::vector<Value>> rows;
  std::int64_t row_count = 0;
  std::int64_t elapsed_ms = 0;
  bool truncated = false;
};

enum class ErrorClass {
  syntax,
  unknown_relation,
  unknown_column,
  type_mismatch,
  aggregate_misuse,
  subquery_error,
  timeout,
  non_readonly_rejected,
  other,
};

std::string to_string(ErrorClass cls);
std::optional<ErrorClass> error_class_from_string(std::string_view name);

struct ExecError {
  ErrorClass error_class = ErrorClass::other;
  std::string message;
  std::optional<std::string> offending_fragment;
};

using ExecOutcome = std::variant<QueryResult, ExecError>;

struct ExecLimits {
  int timeout_ms = 5000;
  std::int64_t max_rows = 10000;
};

// Maps a raw engine error message onto an ErrorClass via the ordered pattern
// table in docs/error_classes.md. Total and deterministic; unmatched
// messages fall through to ErrorClass::other.
ErrorClass classify_error(std::string_view message);

// One database connection. Implementations run already-guarded SQL.
class SqlEngine {
 public:
  virtual ~SqlEngine() = default;
  virtual ExecOutcome run(const std::string& sql, const ExecLimits& limits) = 0;
  virtual std::string name() const = 0;
};

// In-process engine: a private SQLite database materialized from DDL + seed
// scripts (or opened from a file), then locked to query-only mode.
class SqliteEngine final : public SqlEngine {
 public:
  static std::unique_ptr<SqliteEngine> from_scripts(const std::string& ddl_sql,
                                                    const std::string& seed_sql);
  static std::unique_ptr<SqliteEngine> open_file(const std::filesystem::path& path);

  ~SqliteEngine() override;
  ExecOutcome run(const std::string& sql, const ExecLimits& limits) override;
  std::string name() const override { return "sqlite"; }

 private:
  explicit SqliteEngine(void* db) : db_(db) {}
  void* db_;  // sqlite3*
};

// Read-only execution front end: lexical write guard, then the engine.
class SqlExecutor {
 public:
  SqlExecutor(std::unique_ptr<SqlEngine> engine, ExecLimits default_limits = {});

  ExecOutcome execute(const std::string& sql);
  ExecOutcome execute(const std::string& sql, const ExecLimits& limits);

  const ExecLimits& default_limits() const { return limits_; }
  SqlEngine& engine() { return *engine_; }

 private:
  std::unique_ptr<SqlEngine> engine_;
  ExecLimits limits_;
};

using ExecutorFactory = std::function<std::unique_ptr<SqlExecutor>()>;

// Recognizes "sqlite::memory:?ddl=<path>&seed=<path>" and "sqlite:<path>".
// Anything else (e.g. postgres://) throws EngineUnavailable in this build.
std::unique_ptr<SqlEngine> make_engine(const std::string& connection_string);

struct CanonicalResult {
  std::vector<std::vector<std::string>> rows;  // tagged canonical value strings
  std::string digest;                          // sha256 over the canonical form

  bool operator==(const CanonicalResult& other) const { return digest == other.digest; }
};

// Normalizes one cell: decimals rounded to 9 significant digits (integers
// and booleans unify through the same numeric form), text trimmed of
// trailing whitespace, dates to ISO-8601. Idempotent.
Value normalize_value(const Value& value);

// Canonical form for result-set comparison: values normalized, rows sorted
// by total lexicographic order unless order_sensitive, column names
// discarded (comparison is positional).
CanonicalResult canonicalize(const QueryResult& result, bool order_sensitive);

// Checksum over the full contents of every catalog table; detects fixture
// mutation across a test run.
std::string data_checksum(SqlExecutor& executor, const SchemaCatalog& catalog);

}  // namespace forge
