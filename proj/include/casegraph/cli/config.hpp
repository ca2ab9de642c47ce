#pragma once

// Run configuration: one JSON file with per-command sections, plus
// `--set key=value` overrides of scalar fields.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "casegraph/error.hpp"

namespace casegraph::cli {

/// An invalid configuration; the message names the offending field.
class ConfigError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

inline nlohmann::json parse_override_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return text;
  }
}

/// Applies "a.b.c=value" to `config`. Only scalar fields may be set.
inline void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const nlohmann::json value = parse_override_value(assignment.substr(eq + 1));
  if (value.is_object() || value.is_array()) throw ConfigError("config field '" + key + "': --set takes scalar values only");
  nlohmann::json* node = &config;
  std::size_t begin = 0;
  while (true) {
    const auto dot = key.find('.', begin);
    const std::string part = key.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
    if (part.empty()) throw ConfigError("--set: malformed key '" + key + "'");
    if (!node->is_object()) throw ConfigError("config field '" + key + "': '" + part + "' is not inside a section");
    if (dot == std::string::npos) {
      if (node->contains(part) && ((*node)[part].is_object() || (*node)[part].is_array()))
        throw ConfigError("config field '" + key + "' is not a scalar");
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = nlohmann::json::object();
    node = &(*node)[part];
    begin = dot + 1;
  }
}

/// Typed, strict view of one config object. Every field read is recorded so
/// that leftovers can be reported as unknown.
class Section {
 public:
  Section(const nlohmann::json* j, std::string path) : json_(j), path_(std::move(path)) {
    if (json_ && !json_->is_null() && !json_->is_object()) throw ConfigError("config field '" + path_ + "' must be an object");
  }

  bool has(const std::string& key) const { return json_ && json_->is_object() && json_->contains(key); }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    return convert<T>(json_->at(key), key);
  }

  template <class T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!has(key)) throw ConfigError("config field '" + field(key) + "' is required");
    return convert<T>(json_->at(key), key);
  }

  Section section(const std::string& key) {
    used_.insert(key);
    return Section(has(key) ? &json_->at(key) : nullptr, field(key));
  }

  /// Throws on any field that was never read.
  void finish() const {
    if (!json_ || !json_->is_object()) return;
    for (const auto& [k, v] : json_->items())
      if (!used_.count(k)) throw ConfigError("unknown config field '" + field(k) + "'");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config field '" + field(key) + "' " + what);
  }

 private:
  template <class T>
  T convert(const nlohmann::json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(key, "must be an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.get<long long>() < 0) fail(key, "must be non-negative");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(key, "must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(key, "must be a string");
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) fail(key, "must be an array of strings");
      for (const auto& e : v)
        if (!e.is_string()) fail(key, "must be an array of strings");
    }
    return v.get<T>();
  }

  const nlohmann::json* json_;
  std::string path_;
  std::set<std::string> used_;
};

/// A loaded config file; relative paths resolve against its directory.
class RunConfig {
 public:
  RunConfig(nlohmann::json root, std::filesystem::path base) : root_(std::move(root)), base_(std::move(base)) {
    if (!root_.is_object()) throw ConfigError("config root must be a JSON object");
  }

  static RunConfig load(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json root;
    try {
      root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    for (const auto& o : overrides) apply_override(root, o);
    return RunConfig(std::move(root), std::filesystem::absolute(path).parent_path());
  }

  const nlohmann::json& json() const { return root_; }
  Section root() const { return Section(&root_, ""); }
  Section section(const std::string& name) const {
    return Section(root_.contains(name) ? &root_.at(name) : nullptr, name);
  }

  std::uint64_t seed() const {
    if (!root_.contains("seed")) throw ConfigError("config field 'seed' is required for this command");
    if (!root_["seed"].is_number_unsigned() && !(root_["seed"].is_number_integer() && root_["seed"].get<long long>() >= 0))
      throw ConfigError("config field 'seed' must be a non-negative integer");
    return root_["seed"].get<std::uint64_t>();
  }

  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : (base_ / path).lexically_normal();
  }

  /// paths.<key>, resolved; required.
  std::filesystem::path path(const std::string& key) const {
    Section paths = section("paths");
    return resolve(paths.require<std::string>(key));
  }

  /// paths.<key>, resolved; the file or directory must exist.
  std::filesystem::path input(const std::string& key) const {
    auto p = path(key);
    if (!std::filesystem::exists(p)) throw ConfigError("config field 'paths." + key + "': '" + p.string() + "' does not exist");
    return p;
  }

 private:
  nlohmann::json root_;
  std::filesystem::path base_;
};

}  // namespace casegraph::cli
