#pragma once

// Flat sectioned key-value config: "[section]" headers, "key = value" lines,
// full-line comments starting with '#' or ';'. Canonical serialization sorts
// sections and keys so equal configs hash equal regardless of input order.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "jrrelp/errors.hpp"

namespace jrrelp {

class KVConfig {
 public:
  static KVConfig parse(const std::string& text);
  static KVConfig parse_file(const std::string& path);

  void set(const std::string& section, const std::string& key, std::string value);
  void set_int(const std::string& section, const std::string& key, long v);
  void set_double(const std::string& section, const std::string& key, double v);
  void set_bool(const std::string& section, const std::string& key, bool v);

  bool has(const std::string& section, const std::string& key) const;

  // Getters fall back to the default when the key is absent and mark present
  // keys as read; check_fully_read() then rejects leftovers (typo guard).
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  long get_int(const std::string& section, const std::string& key, long fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;

  void check_fully_read() const;  // throws ConfigError listing unknown keys

  std::string canonical() const;
  uint64_t hash() const;

  bool empty() const { return data_.empty(); }

 private:
  std::optional<std::string> find(const std::string& section,
                                  const std::string& key) const;

  std::map<std::string, std::map<std::string, std::string>> data_;
  mutable std::set<std::string> read_;  // "section.key" already consumed
};

}  // namespace jrrelp
