#include "forge/tokenizer.hpp"

#include <map>
#include <mutex>

#include "forge/errors.hpp"

namespace forge {

namespace {

std::mutex g_registry_mutex;
std::map<std::string, Tokenizer::CountFn>& registry() {
  static std::map<std::string, Tokenizer::CountFn> r;
  return r;
}

}  // namespace

Tokenizer Tokenizer::approx4() {
  return Tokenizer("approx4", [](std::string_view text) -> long long {
    return static_cast<long long>((text.size() + 3) / 4);
  });
}

Tokenizer Tokenizer::external(std::string name, CountFn fn) {
  return Tokenizer("external:" + name, std::move(fn));
}

Tokenizer Tokenizer::from_config_key(const std::string& key) {
  if (key == "approx4") return approx4();
  constexpr std::string_view kPrefix = "external:";
  if (key.rfind(kPrefix, 0) == 0) {
    std::string name = key.substr(kPrefix.size());
    std::lock_guard lock(g_registry_mutex);
    auto it = registry().find(name);
    if (it == registry().end()) {
      throw ConfigError("tokenizer '" + key + "' is not registered");
    }
    return Tokenizer(key, it->second);
  }
  throw ConfigError("unknown tokenizer key '" + key + "' (expected approx4 or external:<name>)");
}

void register_tokenizer(const std::string& name, Tokenizer::CountFn fn) {
  std::lock_guard lock(g_registry_mutex);
  registry()[name] = std::move(fn);
}

}  // namespace forge
