#pragma once

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace simagent {

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Reads optional keys of a JSON object into existing fields, rejecting unknown keys.
class FieldReader {
public:
  FieldReader(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_ + ": expected a JSON object");
  }

  template <class T>
  FieldReader& operator()(const char* key, T& out) {
    known_.push_back(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(section_ + "." + key + ": wrong type (" + it->dump() + ")");
    }
    return *this;
  }

  /// Throws on any key that no call above consumed.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool ok = false;
      for (const auto& k : known_) ok = ok || k == it.key();
      if (!ok) throw ConfigError(section_ + ": unknown key '" + it.key() + "'");
    }
  }

private:
  const nlohmann::json& j_;
  std::string section_;
  std::vector<std::string> known_;
};

}  // namespace simagent
