// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rahf {

/// `key = value` lines; lines starting with '#' are comments; later keys
/// override earlier ones. Values may contain '=' and '#'.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text);
  static KvConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated integers, e.g. "768, 384".
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, int value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, double value);
  void set(const std::string& key, const std::vector<int>& values);

  /// Sorted by key, one `key=value` per line.
  std::string to_text() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace rahf
