#include "jrrelp/manifest.hpp"

#include <ctime>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "jrrelp/hashing.hpp"

namespace jrrelp {

uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file for hashing: " + path);
  Fnv1a h;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h.update(buf, static_cast<size_t>(in.gcount()));
  return h.digest();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::add_artifact(const std::string& dir, const std::string& rel_path) {
  artifacts.push_back({rel_path, file_hash(dir + "/" + rel_path)});
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = hex_u64(config_hash);
  j["vocab_hash"] = hex_u64(vocab_hash);
  nlohmann::ordered_json ds;
  for (const auto& [split, hash] : dataset_hashes) ds[split] = hex_u64(hash);
  j["dataset_hashes"] = std::move(ds);
  j["seed"] = seed;
  j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& a : artifacts)
    j["artifacts"].push_back({{"path", a.path}, {"hash", hex_u64(a.file_hash)}});
  j["timestamp"] = timestamp;
  return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: bad JSON: ") + e.what());
  }
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.config_hash = parse_hex_u64(j.at("config_hash").get<std::string>());
    m.vocab_hash = parse_hex_u64(j.at("vocab_hash").get<std::string>());
    for (const auto& [split, hash] : j.at("dataset_hashes").items())
      m.dataset_hashes[split] = parse_hex_u64(hash.get<std::string>());
    m.seed = j.at("seed").get<uint64_t>();
    for (const auto& a : j.at("artifacts"))
      m.artifacts.push_back({a.at("path").get<std::string>(),
                             parse_hex_u64(a.at("hash").get<std::string>())});
    m.timestamp = j.at("timestamp").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: missing or mistyped field: ") +
                          e.what());
  }
  return m;
}

void RunManifest::save(const std::string& dir) const {
  const std::string path = dir + "/manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << to_json() << '\n';
}

RunManifest RunManifest::load_dir(const std::string& dir) {
  const std::string path = dir + "/manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

void RunManifest::verify(const std::string& dir) const {
  for (const auto& a : artifacts) {
    const uint64_t actual = file_hash(dir + "/" + a.path);
    if (actual != a.file_hash)
      throw ValidationError("manifest: artifact hash mismatch for " + a.path +
                            " (expected " + hex_u64(a.file_hash) + ", got " +
                            hex_u64(actual) + ")");
  }
}

}  // namespace jrrelp
