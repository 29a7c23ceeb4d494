#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace forge {

// Token counting for prompt budgets and the token-length metric. The default
// is the ceil(bytes / 4) heuristic; exact tokenizers can be registered by
// name and selected with the config key `tokenizer = "external:<name>"`.
class Tokenizer {
 public:
  using CountFn = std::function<long long(std::string_view)>;

  static Tokenizer approx4();
  static Tokenizer external(std::string name, CountFn fn);
  // Accepts "approx4" or "external:<name>"; throws ConfigError otherwise.
  static Tokenizer from_config_key(const std::string& key);

  long long count(std::string_view text) const { return fn_(text); }
  const std::string& name() const { return name_; }

 private:
  Tokenizer(std::string name, CountFn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  std::string name_;
  CountFn fn_;
};

// Registers an exact tokenizer under `external:<name>`.
void register_tokenizer(const std::string& name, Tokenizer::CountFn fn);

}  // namespace forge
