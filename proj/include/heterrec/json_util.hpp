#pragma once

#include <initializer_list>
#include <string>

#include "json.hpp"
#include "heterrec/errors.hpp"

namespace heterrec {

// Rejects keys outside `allowed`; config typos should fail loudly.
inline void require_known_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                               const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename V>
void read_opt(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace heterrec
