#include "jrrelp/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "jrrelp/hashing.hpp"

namespace jrrelp {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

KVConfig KVConfig::parse(const std::string& text) {
  KVConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": empty section name");
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": key '" + key + "' appears before any [section]");
    auto& sec = cfg.data_[section];
    if (sec.count(key))
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": duplicate key '" + section + "." + key + "'");
    sec[key] = value;
  }
  return cfg;
}

KVConfig KVConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void KVConfig::set(const std::string& section, const std::string& key,
                   std::string value) {
  data_[section][key] = std::move(value);
}

void KVConfig::set_int(const std::string& section, const std::string& key, long v) {
  set(section, key, std::to_string(v));
}

void KVConfig::set_double(const std::string& section, const std::string& key,
                          double v) {
  // Shortest round-trip form keeps canonical dumps tidy and exact.
  std::ostringstream out;
  out.precision(17);
  out << v;
  set(section, key, out.str());
}

void KVConfig::set_bool(const std::string& section, const std::string& key, bool v) {
  set(section, key, v ? "true" : "false");
}

bool KVConfig::has(const std::string& section, const std::string& key) const {
  auto sec = data_.find(section);
  return sec != data_.end() && sec->second.count(key) > 0;
}

std::optional<std::string> KVConfig::find(const std::string& section,
                                          const std::string& key) const {
  auto sec = data_.find(section);
  if (sec == data_.end()) return std::nullopt;
  auto it = sec->second.find(key);
  if (it == sec->second.end()) return std::nullopt;
  read_.insert(section + "." + key);
  return it->second;
}

std::string KVConfig::get_string(const std::string& section, const std::string& key,
                                 const std::string& fallback) const {
  return find(section, key).value_or(fallback);
}

long KVConfig::get_int(const std::string& section, const std::string& key,
                       long fallback) const {
  auto v = find(section, key);
  if (!v) return fallback;
  errno = 0;
  char* end = nullptr;
  const long out = std::strtol(v->c_str(), &end, 10);
  if (errno != 0 || end == v->c_str() || *end != '\0')
    throw ConfigError("config " + section + "." + key + ": expected integer, got '" +
                      *v + "'");
  return out;
}

double KVConfig::get_double(const std::string& section, const std::string& key,
                            double fallback) const {
  auto v = find(section, key);
  if (!v) return fallback;
  errno = 0;
  char* end = nullptr;
  const double out = std::strtod(v->c_str(), &end);
  if (errno != 0 || end == v->c_str() || *end != '\0')
    throw ConfigError("config " + section + "." + key + ": expected number, got '" +
                      *v + "'");
  return out;
}

bool KVConfig::get_bool(const std::string& section, const std::string& key,
                        bool fallback) const {
  auto v = find(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError("config " + section + "." + key + ": expected boolean, got '" +
                    *v + "'");
}

void KVConfig::check_fully_read() const {
  std::vector<std::string> unknown;
  for (const auto& [section, keys] : data_)
    for (const auto& [key, value] : keys)
      if (!read_.count(section + "." + key)) unknown.push_back(section + "." + key);
  if (unknown.empty()) return;
  std::string msg = "config: unknown key(s):";
  for (const auto& k : unknown) msg += " " + k;
  throw ConfigError(msg);
}

std::string KVConfig::canonical() const {
  std::string out;
  for (const auto& [section, keys] : data_) {  // std::map: already sorted
    out += "[" + section + "]\n";
    for (const auto& [key, value] : keys) out += key + " = " + value + "\n";
  }
  return out;
}

uint64_t KVConfig::hash() const { return fnv1a(canonical()); }

}  // namespace jrrelp
