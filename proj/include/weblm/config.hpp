#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "weblm/errors.hpp"

namespace weblm {

// Flat key = value configuration. Accepts a minimal TOML-style file (one
// `key = value` per line, # comments, optional quoted strings) or a flat JSON
// object when the path ends in .json. Values are kept as strings and parsed
// on access.
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text) {
    Config cfg;
    size_t pos = 0, lineno = 0;
    while (pos <= text.size()) {
      size_t eol = text.find('\n', pos);
      if (eol == std::string_view::npos) eol = text.size();
      std::string_view line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++lineno;
      cfg.parse_line(line, lineno);
      if (eol == text.size()) break;
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::IoError, "cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    if (path.extension() == ".json") {
      Config cfg;
      auto j = nlohmann::json::parse(ss.str(), nullptr, false);
      if (j.is_discarded() || !j.is_object())
        fail(Errc::ConfigError, "config file is not a flat JSON object: " + path.string());
      for (auto& [k, v] : j.items()) {
        if (v.is_string())
          cfg.kv_[k] = v.get<std::string>();
        else
          cfg.kv_[k] = v.dump();
      }
      return cfg;
    }
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  std::string get_str(const std::string& key, const std::string& def = "") const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
  }

  int64_t get_int(const std::string& key, int64_t def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
      size_t used = 0;
      int64_t v = std::stoll(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      fail(Errc::ConfigError, "key '" + key + "' is not an integer: " + it->second);
    }
  }

  uint64_t get_u64(const std::string& key, uint64_t def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
      size_t used = 0;
      uint64_t v = std::stoull(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      fail(Errc::ConfigError, "key '" + key + "' is not an unsigned integer: " + it->second);
    }
  }

  double get_double(const std::string& key, double def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
      size_t used = 0;
      double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      fail(Errc::ConfigError, "key '" + key + "' is not a number: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    fail(Errc::ConfigError, "key '" + key + "' is not a bool: " + it->second);
  }

  // Deterministic echo: sorted keys, one per line.
  std::string echo() const {
    std::string out;
    for (const auto& [k, v] : kv_) {
      out += k;
      out += " = ";
      out += v;
      out += '\n';
    }
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  void parse_line(std::string_view line, size_t lineno) {
    std::string_view s = strip_comment(line);
    s = trim(s);
    if (s.empty()) return;
    size_t eq = s.find('=');
    if (eq == std::string_view::npos)
      fail(Errc::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    std::string key(trim(s.substr(0, eq)));
    std::string_view val = trim(s.substr(eq + 1));
    if (key.empty()) fail(Errc::ConfigError, "line " + std::to_string(lineno) + ": empty key");
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
      val = val.substr(1, val.size() - 2);
    kv_[key] = std::string(val);
  }

  static std::string_view strip_comment(std::string_view s) {
    bool quoted = false;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace weblm
