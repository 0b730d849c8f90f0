#pragma once

// Run manifests: every CLI command records what it read, what it produced
// and the fingerprints needed to reproduce or verify the run. Artifact
// hashes are recomputed on load and must match.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jrrelp/errors.hpp"

namespace jrrelp {

struct ManifestArtifact {
  std::string path;        // relative to the manifest's directory
  uint64_t file_hash = 0;  // fnv1a over raw bytes
};

struct RunManifest {
  std::string command;  // subcommand that produced this directory
  uint64_t config_hash = 0;
  uint64_t vocab_hash = 0;
  std::map<std::string, uint64_t> dataset_hashes;  // split -> semantic hash
  uint64_t seed = 0;
  std::vector<ManifestArtifact> artifacts;
  std::string timestamp;  // ISO-8601 UTC; the one non-reproducible field

  // Hashes the file as it sits in dir and appends it to the artifact list.
  void add_artifact(const std::string& dir, const std::string& rel_path);

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);

  void save(const std::string& dir) const;  // writes <dir>/manifest.json
  static RunManifest load_dir(const std::string& dir);

  // Recomputes every artifact hash under dir; mismatch or missing file throws.
  void verify(const std::string& dir) const;
};

uint64_t file_hash(const std::string& path);
std::string utc_timestamp();

}  // namespace jrrelp
