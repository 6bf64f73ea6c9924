#pragma once

#include "fixpool/core.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fixpool {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Flat "key = value" configuration. '#' starts a comment anywhere on a line.
// Every accessor records the key it served (with the value actually used, so
// defaults are materialized); after binding, unconsumed() names the keys the
// command never asked for, which callers reject. Relative paths resolve
// against the config file's directory.
class ConfigMap {
 public:
  static ConfigMap load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    ConfigMap cfg;
    cfg.dir_ = std::filesystem::absolute(std::filesystem::path(path)).parent_path();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string stripped = detail::trim(line);
      if (stripped.empty()) continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config: missing '=' at " + path + ":" + std::to_string(lineno));
      const std::string key = detail::trim(stripped.substr(0, eq));
      const std::string value = detail::trim(stripped.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config: empty key at " + path + ":" + std::to_string(lineno));
      if (key.find_first_of(" \t") != std::string::npos)
        throw ConfigError("config: key contains whitespace at " + path + ":" +
                          std::to_string(lineno));
      if (cfg.values_.count(key))
        throw ConfigError("config: duplicate key '" + key + "' at " + path + ":" +
                          std::to_string(lineno));
      cfg.values_[key] = value;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
    consumed_[key] = it->second;
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = values_.find(key);
    const std::string v = it == values_.end() ? fallback : it->second;
    consumed_[key] = v;
    return v;
  }

  double get_double(const std::string& key) { return parse_double(key, get_string(key)); }
  double get_double(const std::string& key, double fallback) {
    if (!has(key)) {
      consumed_[key] = format_g17(fallback);
      return fallback;
    }
    return parse_double(key, get_string(key));
  }

  long long get_int(const std::string& key) { return parse_int(key, get_string(key)); }
  long long get_int(const std::string& key, long long fallback) {
    if (!has(key)) {
      consumed_[key] = std::to_string(fallback);
      return fallback;
    }
    return parse_int(key, get_string(key));
  }

  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) {
      consumed_[key] = std::to_string(fallback);
      return fallback;
    }
    const std::string v = get_string(key);
    try {
      std::size_t used = 0;
      const std::uint64_t out = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' is not an unsigned integer: " + v);
    }
  }

  bool get_bool(const std::string& key, bool fallback) {
    if (!has(key)) {
      consumed_[key] = fallback ? "true" : "false";
      return fallback;
    }
    const std::string v = get_string(key);
    if (v == "true" || v == "1") {
      consumed_[key] = "true";
      return true;
    }
    if (v == "false" || v == "0") {
      consumed_[key] = "false";
      return false;
    }
    throw ConfigError("config: key '" + key + "' is not a boolean: " + v);
  }

  // Comma-separated list of integers (e.g. embedding hidden sizes).
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) {
    if (!has(key)) {
      std::string repr;
      for (std::size_t i = 0; i < fallback.size(); ++i)
        repr += (i ? "," : "") + std::to_string(fallback[i]);
      consumed_[key] = repr;
      return fallback;
    }
    return parse_int_list(key, get_string(key));
  }

  std::vector<double> get_double_list(const std::string& key) {
    const std::string v = get_string(key);
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, detail::trim(item)));
    if (out.empty()) throw ConfigError("config: key '" + key + "' is an empty list");
    return out;
  }

  std::vector<std::string> get_string_list(const std::string& key) {
    const std::string v = get_string(key);
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = detail::trim(item);
      if (!t.empty()) out.push_back(t);
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "' is an empty list");
    return out;
  }

  // Absolute path for a path-valued key; relative values resolve against the
  // config file's directory. The consumed record keeps the resolved form.
  std::string get_path(const std::string& key) {
    return resolve_and_record(key, get_string(key));
  }

  std::string get_path(const std::string& key, const std::string& fallback) {
    return resolve_and_record(key, get_string(key, fallback));
  }

  // Comma-separated paths, each resolved like get_path. The consumed record
  // keeps the resolved, comma-joined form.
  std::vector<std::string> get_path_list(const std::string& key) {
    const auto raw = get_string_list(key);
    std::vector<std::string> out;
    out.reserve(raw.size());
    std::string joined;
    for (const auto& r : raw) {
      std::filesystem::path p(r);
      if (!p.is_absolute()) p = dir_ / p;
      out.push_back(p.lexically_normal().string());
      if (!joined.empty()) joined += ",";
      joined += out.back();
    }
    consumed_[key] = joined;
    return out;
  }

  std::vector<std::string> unconsumed() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!consumed_.count(k)) out.push_back(k);
    return out;
  }

  void reject_unconsumed() const {
    const auto extra = unconsumed();
    if (extra.empty()) return;
    std::string msg = "config: unknown key(s):";
    for (const auto& k : extra) msg += " " + k;
    throw ConfigError(msg);
  }

  // Override the recorded value for a key (e.g. workers forced by env).
  void record(const std::string& key, const std::string& value) { consumed_[key] = value; }

  // Fully resolved configuration: every consumed key with the value in effect,
  // sorted, so a rerun from the lock regenerates the identical file.
  void write_lock(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("config: cannot write lock " + path);
    for (const auto& [k, v] : consumed_) out << k << " = " << v << '\n';
    if (!out.good()) throw IoError("config: lock write failed for " + path);
  }

 private:
  double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double out = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      consumed_[key] = v;
      return out;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' is not a number: " + v);
    }
  }

  long long parse_int(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const long long out = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      consumed_[key] = v;
      return out;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' is not an integer: " + v);
    }
  }

  std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = detail::trim(item);
      if (t.empty()) continue;
      out.push_back(static_cast<int>(parse_int(key, t)));
    }
    consumed_[key] = v;
    return out;
  }

  std::string resolve_and_record(const std::string& key, const std::string& value) {
    std::filesystem::path p(value);
    if (!p.is_absolute()) p = dir_ / p;
    const std::string resolved = p.lexically_normal().string();
    consumed_[key] = resolved;
    return resolved;
  }

  std::filesystem::path dir_;
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> consumed_;
};

}  // namespace fixpool
