#include "sql_lex.hpp"

#include <cctype>

namespace forge::sqllex {

void scan(std::string_view sql, const std::function<bool(const TokenEvent&)>& on_token,
          const std::function<void(char, std::size_t, int)>& on_char) {
  std::size_t i = 0;
  const std::size_t n = sql.size();
  int depth = 0;
  while (i < n) {
    char c = sql[i];
    if (c == '\'' || c == '"' || c == '`') {
      char quote = c;
      ++i;
      while (i < n) {
        if (sql[i] == quote) {
          if (i + 1 < n && sql[i + 1] == quote) {
            i += 2;  // doubled quote escape
            continue;
          }
          ++i;
          break;
        }
        ++i;
      }
      continue;
    }
    if (c == '-' && i + 1 < n && sql[i + 1] == '-') {
      std::size_t nl = sql.find('\n', i);
      if (nl == std::string_view::npos) return;
      i = nl;
      continue;
    }
    if (c == '/' && i + 1 < n && sql[i + 1] == '*') {
      std::size_t close = sql.find("*/", i + 2);
      if (close == std::string_view::npos) return;
      i = close + 2;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = i;
      while (i < n && (std::isalnum(static_cast<unsigned char>(sql[i])) || sql[i] == '_')) ++i;
      TokenEvent ev;
      ev.token_lower.reserve(i - start);
      for (std::size_t k = start; k < i; ++k) {
        ev.token_lower.push_back(
            static_cast<char>(std::tolower(static_cast<unsigned char>(sql[k]))));
      }
      ev.begin = start;
      ev.end = i;
      ev.paren_depth = depth;
      if (!on_token(ev)) return;
      continue;
    }
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (on_char) on_char(c, i, depth);
    ++i;
  }
}

std::vector<std::size_t> bare_positions(std::string_view sql, char ch) {
  std::vector<std::size_t> out;
  scan(
      sql, [](const TokenEvent&) { return true; },
      [&](char c, std::size_t pos, int) {
        if (c == ch) out.push_back(pos);
      });
  return out;
}

}  // namespace forge::sqllex
