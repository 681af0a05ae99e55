#pragma once

#include <charconv>
#include <cmath>
#include <limits>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "flowmat/common/errors.hpp"

namespace flowmat {

// Flat `key = value` settings. Lines starting with '#' are comments. Keys are
// kept sorted, which makes to_text() canonical.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      const auto key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      kv.values_[key] = trim(line.substr(eq + 1));
    }
    return kv;
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void set_double(const std::string& key, double value) { values_[key] = format_double(value); }
  void set_uint(const std::string& key, std::uint64_t value) { values_[key] = std::to_string(value); }
  void set_bool(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& s = it->second;
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError("key '" + key + "': not a number: " + s);
    return v;
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& s = it->second;
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError("key '" + key + "': not a nonnegative integer: " + s);
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got " + it->second);
  }

  // Comma-separated lists, e.g. `eval.budgets = 64,128,256`.
  std::vector<std::uint64_t> get_uint_list(const std::string& key,
                                           const std::vector<std::uint64_t>& fallback) const {
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(key)) {
      KeyValues one;
      one.values_[key] = item;
      out.push_back(one.get_uint(key, 0));
    }
    return has(key) ? out : fallback;
  }

  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const {
    std::vector<double> out;
    for (const auto& item : split_list(key)) {
      KeyValues one;
      one.values_[key] = item;
      out.push_back(one.get_double(key, 0.0));
    }
    return has(key) ? out : fallback;
  }

  // Keys present in the file but never read.
  std::set<std::string> unused_keys() const {
    std::set<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.insert(k);
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

  // Shortest text that parses back to the same double.
  static std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
  }

 private:
  std::vector<std::string> split_list(const std::string& key) const {
    used_.insert(key);
    std::vector<std::string> out;
    auto it = values_.find(key);
    if (it == values_.end()) return out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) throw ConfigError("key '" + key + "': empty list item");
      out.push_back(item);
    }
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace flowmat
