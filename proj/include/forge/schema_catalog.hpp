#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

enum class SqlDialect { CommonSubset, Postgres };

std::string to_string(SqlDialect dialect);

struct ColumnDef {
  std::string name;
  std::string sql_type;
  bool nullable = true;
  std::string description;  // may be empty, never meaningful-absent
};

struct ForeignKeyDef {
  std::string local_column;
  std::string foreign_table;
  std::string foreign_column;
};

struct TableDef {
  std::string name;
  std::vector<ColumnDef> columns;
  std::vector<std::string> primary_key;
  std::vector<ForeignKeyDef> foreign_keys;

  const ColumnDef* find_column(std::string_view column_name) const;
};

// The relational schema the pipeline treats as the internalization target.
// Immutable after load; safe to share across workers.
struct SchemaCatalog {
  std::string database_id;
  std::vector<TableDef> tables;
  std::string version_note;
  SqlDialect dialect = SqlDialect::CommonSubset;

  const TableDef* find_table(std::string_view table_name) const;
};

// Parses the catalog file format (see docs/catalog_format.md) and validates
// all catalog invariants. Throws ParseError with a line number on malformed
// input and IntegrityError naming the offending entity on structural faults.
SchemaCatalog load_catalog(std::string_view source);
SchemaCatalog load_catalog_file(const std::filesystem::path& path);

// Writes the catalog back out in the catalog file format. Round trip holds:
// load_catalog(serialize_catalog(c)) renders identically to c.
std::string serialize_catalog(const SchemaCatalog& catalog);

// Canonical deterministic text rendering: a header, one CREATE TABLE block
// per table in catalog order (column descriptions inline as SQL comments),
// each followed by its foreign-key notes. This string is the memorization
// target and doubles as executable DDL for the sandbox engine.
std::string render_schema_text(const SchemaCatalog& catalog);

// SHA-256 hex digest of the canonical rendering. Guards against schema drift
// between data-generation and evaluation runs.
std::string fingerprint(const SchemaCatalog& catalog);

// Digest algorithm name recorded in fixture manifests.
inline constexpr std::string_view kFingerprintAlgorithm = "sha256";

// Throws IntegrityError / ParseError if any catalog invariant is violated.
// load_catalog calls this; exposed for programmatic catalog construction.
void validate_catalog(const SchemaCatalog& catalog);

}  // namespace forge
