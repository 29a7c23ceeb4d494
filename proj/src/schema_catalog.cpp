#include "forge/schema_catalog.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "forge/digest.hpp"
#include "forge/errors.hpp"

namespace forge {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Splits off the first whitespace-delimited token; rest keeps its own trim.
std::pair<std::string_view, std::string_view> split_first(std::string_view s) {
  s = trim(s);
  size_t i = 0;
  while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return {s.substr(0, i), trim(s.substr(i))};
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

SqlDialect parse_dialect(std::string_view value, int line) {
  if (value == "common-subset") return SqlDialect::CommonSubset;
  if (value == "postgres") return SqlDialect::Postgres;
  throw ParseError("unknown dialect '" + std::string(value) + "'", line);
}

}  // namespace

std::string to_string(SqlDialect dialect) {
  return dialect == SqlDialect::Postgres ? "postgres" : "common-subset";
}

const ColumnDef* TableDef::find_column(std::string_view column_name) const {
  for (const auto& c : columns) {
    if (c.name == column_name) return &c;
  }
  return nullptr;
}

const TableDef* SchemaCatalog::find_table(std::string_view table_name) const {
  for (const auto& t : tables) {
    if (t.name == table_name) return &t;
  }
  return nullptr;
}

SchemaCatalog load_catalog(std::string_view source) {
  SchemaCatalog catalog;
  TableDef* current = nullptr;
  bool saw_database_id = false;

  int line_no = 0;
  size_t pos = 0;
  while (pos <= source.size()) {
    size_t eol = source.find('\n', pos);
    std::string_view raw = source.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                            : eol - pos);
    pos = eol == std::string_view::npos ? source.size() + 1 : eol + 1;
    ++line_no;

    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;

    auto [keyword, rest] = split_first(line);
    if (keyword == "database_id") {
      auto [id, extra] = split_first(rest);
      if (id.empty()) throw ParseError("database_id requires a value", line_no);
      if (!extra.empty()) throw ParseError("database_id must not contain whitespace", line_no);
      catalog.database_id = std::string(id);
      saw_database_id = true;
    } else if (keyword == "dialect") {
      catalog.dialect = parse_dialect(rest, line_no);
    } else if (keyword == "version_note") {
      catalog.version_note = std::string(rest);
    } else if (keyword == "table") {
      auto [name, extra] = split_first(rest);
      if (!is_identifier(name)) throw ParseError("table requires an identifier name", line_no);
      if (!extra.empty()) throw ParseError("unexpected text after table name", line_no);
      catalog.tables.push_back(TableDef{std::string(name), {}, {}, {}});
      current = &catalog.tables.back();
    } else if (keyword == "column") {
      if (!current) throw ParseError("column outside of a table block", line_no);
      auto [name, after_name] = split_first(rest);
      if (!is_identifier(name)) throw ParseError("column requires an identifier name", line_no);
      auto [type, after_type] = split_first(after_name);
      if (type.empty()) throw ParseError("column '" + std::string(name) + "' missing a type", line_no);
      ColumnDef col{std::string(name), std::string(type), true, ""};
      std::string_view tail = after_type;
      if (auto [flag, after_flag] = split_first(tail); flag == "!null") {
        col.nullable = false;
        tail = after_flag;
      } else if (flag == "null") {
        tail = after_flag;
      }
      col.description = std::string(tail);
      current->columns.push_back(std::move(col));
    } else if (keyword == "primary_key") {
      if (!current) throw ParseError("primary_key outside of a table block", line_no);
      std::string_view remainder = rest;
      while (!remainder.empty()) {
        auto [col, next] = split_first(remainder);
        std::string col_name(col);
        if (!col_name.empty() && col_name.back() == ',') col_name.pop_back();
        if (!is_identifier(col_name)) throw ParseError("primary_key expects column names", line_no);
        current->primary_key.push_back(col_name);
        remainder = next;
      }
      if (current->primary_key.empty()) throw ParseError("primary_key requires columns", line_no);
    } else if (keyword == "foreign_key") {
      if (!current) throw ParseError("foreign_key outside of a table block", line_no);
      // foreign_key <local> -> <table>.<column>
      auto [local, after_local] = split_first(rest);
      auto [arrow, target] = split_first(after_local);
      if (!is_identifier(local) || arrow != "->") {
        throw ParseError("expected: foreign_key <column> -> <table>.<column>", line_no);
      }
      auto [ref, extra] = split_first(target);
      size_t dot = ref.find('.');
      if (dot == std::string_view::npos || !extra.empty()) {
        throw ParseError("expected: foreign_key <column> -> <table>.<column>", line_no);
      }
      ForeignKeyDef fk{std::string(local), std::string(ref.substr(0, dot)),
                       std::string(ref.substr(dot + 1))};
      if (!is_identifier(fk.foreign_table) || !is_identifier(fk.foreign_column)) {
        throw ParseError("foreign_key target must be <table>.<column>", line_no);
      }
      current->foreign_keys.push_back(std::move(fk));
    } else {
      throw ParseError("unknown directive '" + std::string(keyword) + "'", line_no);
    }
  }

  if (!saw_database_id) throw ParseError("missing database_id directive");
  validate_catalog(catalog);
  return catalog;
}

SchemaCatalog load_catalog_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open catalog file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_catalog(buf.str());
}

void validate_catalog(const SchemaCatalog& catalog) {
  if (catalog.database_id.empty()) {
    throw IntegrityError("database_id must be non-empty", "database_id");
  }
  for (char c : catalog.database_id) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      throw IntegrityError("database_id must not contain whitespace", catalog.database_id);
    }
  }

  std::set<std::string> table_names;
  for (const auto& table : catalog.tables) {
    if (!table_names.insert(table.name).second) {
      throw IntegrityError("duplicate table '" + table.name + "'", table.name);
    }
    std::set<std::string> column_names;
    for (const auto& col : table.columns) {
      if (!column_names.insert(col.name).second) {
        throw IntegrityError("duplicate column '" + col.name + "' in table '" + table.name + "'",
                             table.name + "." + col.name);
      }
    }
    for (const auto& pk : table.primary_key) {
      if (!table.find_column(pk)) {
        throw IntegrityError("primary_key column '" + pk + "' not found in table '" + table.name + "'",
                             table.name + "." + pk);
      }
    }
  }
  for (const auto& table : catalog.tables) {
    for (const auto& fk : table.foreign_keys) {
      if (!table.find_column(fk.local_column)) {
        throw IntegrityError("foreign_key local column '" + fk.local_column + "' not found in table '" +
                                 table.name + "'",
                             table.name + "." + fk.local_column);
      }
      const TableDef* target = catalog.find_table(fk.foreign_table);
      if (!target) {
        throw IntegrityError("foreign_key references missing table '" + fk.foreign_table + "'",
                             fk.foreign_table);
      }
      if (!target->find_column(fk.foreign_column)) {
        throw IntegrityError("foreign_key references missing column '" + fk.foreign_table + "." +
                                 fk.foreign_column + "'",
                             fk.foreign_table + "." + fk.foreign_column);
      }
    }
  }
}

std::string serialize_catalog(const SchemaCatalog& catalog) {
  std::ostringstream out;
  out << "database_id " << catalog.database_id << "\n";
  out << "dialect " << to_string(catalog.dialect) << "\n";
  if (!catalog.version_note.empty()) out << "version_note " << catalog.version_note << "\n";
  for (const auto& table : catalog.tables) {
    out << "\ntable " << table.name << "\n";
    for (const auto& col : table.columns) {
      out << "  column " << col.name << " " << col.sql_type << (col.nullable ? "" : " !null");
      if (!col.description.empty()) out << "  " << col.description;
      out << "\n";
    }
    if (!table.primary_key.empty()) {
      out << "  primary_key";
      for (const auto& pk : table.primary_key) out << " " << pk;
      out << "\n";
    }
    for (const auto& fk : table.foreign_keys) {
      out << "  foreign_key " << fk.local_column << " -> " << fk.foreign_table << "."
          << fk.foreign_column << "\n";
    }
  }
  return out.str();
}

std::string render_schema_text(const SchemaCatalog& catalog) {
  std::ostringstream out;
  out << "-- Database: " << catalog.database_id << "\n";
  out << "-- Dialect: " << to_string(catalog.dialect) << "\n";
  if (!catalog.version_note.empty()) out << "-- Note: " << catalog.version_note << "\n";

  for (const auto& table : catalog.tables) {
    out << "\nCREATE TABLE " << table.name << " (\n";
    for (size_t i = 0; i < table.columns.size(); ++i) {
      const auto& col = table.columns[i];
      bool last_item = (i + 1 == table.columns.size()) && table.primary_key.empty();
      out << "  " << col.name << " " << upper(col.sql_type);
      if (!col.nullable) out << " NOT NULL";
      if (!last_item) out << ",";
      if (!col.description.empty()) out << " -- " << col.description;
      out << "\n";
    }
    if (!table.primary_key.empty()) {
      out << "  PRIMARY KEY (";
      for (size_t i = 0; i < table.primary_key.size(); ++i) {
        if (i) out << ", ";
        out << table.primary_key[i];
      }
      out << ")\n";
    }
    out << ");\n";
    if (!table.foreign_keys.empty()) {
      out << "-- Foreign keys for " << table.name << ":\n";
      for (const auto& fk : table.foreign_keys) {
        out << "--   " << table.name << "." << fk.local_column << " -> " << fk.foreign_table << "."
            << fk.foreign_column << "\n";
      }
    }
  }
  return out.str();
}

std::string fingerprint(const SchemaCatalog& catalog) {
  return sha256_hex(render_schema_text(catalog));
}

}  // namespace forge
