#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "json.hpp"

namespace layerforge {

/// All module settings in one JSON document of sections. Precedence, lowest first:
/// built-in defaults, the config file, environment variables LAYERFORGE_<SECTION>_<KEY>.
class Config {
 public:
  using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

  static nlohmann::json defaults();
  static Config from_defaults();
  /// Unknown sections or keys and type mismatches raise ConfigError.
  static Config load(const std::optional<std::filesystem::path>& path, const EnvLookup& env = process_env);
  static std::optional<std::string> process_env(const std::string& name);

  /// Merges `overrides` (same schema as the file) on top of the current values.
  void merge(const nlohmann::json& overrides, const std::string& origin);
  void apply_env(const EnvLookup& env);

  const nlohmann::json& values() const { return data_; }
  const nlohmann::json& section(const std::string& name) const;

  template <class T>
  T get(const std::string& section_name, const std::string& key) const {
    try {
      return section(section_name).at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw_bad_key(section_name, key, e.what());
    }
  }

  /// FNV-1a of the canonical serialisation.
  std::uint64_t hash() const;
  std::string dump() const { return data_.dump(2); }

 private:
  [[noreturn]] static void throw_bad_key(const std::string& section, const std::string& key, const char* what);
  nlohmann::json data_;
};

}  // namespace layerforge
