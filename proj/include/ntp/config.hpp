#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ntp/errors.hpp"

namespace ntp {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// `key = value` lines, '#' comments, comma-separated lists. Keeps the raw
/// text so outputs can record a stable hash of exactly what was run.
class KeyValueConfig {
public:
  static KeyValueConfig parse(const std::string& text) {
    KeyValueConfig c;
    c.raw_ = text;
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw parse_error("config line " + std::to_string(lineno) + ": expected 'key = value'", lineno);
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string val = detail::trim(line.substr(eq + 1));
      if (key.empty())
        throw parse_error("config line " + std::to_string(lineno) + ": empty key", lineno);
      c.kv_[key] = val;
    }
    return c;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw parse_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
  }

  double get_double(const std::string& key, double def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw parse_error("config key '" + key + "': not a number: " + it->second);
    }
  }

  long long get_int(const std::string& key, long long def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw parse_error("config key '" + key + "': not an integer: " + it->second);
    }
  }

  std::vector<long long> get_int_list(const std::string& key, std::vector<long long> def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<long long> out;
    for (const auto& tok : split(it->second)) {
      try {
        out.push_back(std::stoll(tok));
      } catch (...) {
        throw parse_error("config key '" + key + "': not an integer list: " + it->second);
      }
    }
    return out;
  }

  std::vector<std::string> get_string_list(const std::string& key,
                                           std::vector<std::string> def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    auto out = split(it->second);
    return out.empty() ? def : out;
  }

  const std::string& raw() const { return raw_; }
  const std::map<std::string, std::string>& entries() const { return kv_; }

private:
  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
      if (ch == ',') {
        const auto t = detail::trim(cur);
        if (!t.empty()) out.push_back(t);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    const auto t = detail::trim(cur);
    if (!t.empty()) out.push_back(t);
    return out;
  }

  std::map<std::string, std::string> kv_;
  std::string raw_;
};

/// FNV-1a, used to fingerprint configs in output manifests.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace ntp
