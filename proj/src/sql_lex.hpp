#pragma once

// Internal minimal SQL scanner: walks a statement skipping string literals,
// quoted identifiers and comments, reporting bare identifier tokens (with
// positions and parenthesis depth) and bare single characters.

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace forge::sqllex {

struct TokenEvent {
  std::string token_lower;
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the last character
  int paren_depth = 0;
};

// on_token returns false to stop the scan. on_char (optional) sees every
// character outside literals/comments.
void scan(std::string_view sql, const std::function<bool(const TokenEvent&)>& on_token,
          const std::function<void(char, std::size_t, int)>& on_char = {});

// Positions of `ch` outside literals and comments.
std::vector<std::size_t> bare_positions(std::string_view sql, char ch);

}  // namespace forge::sqllex
