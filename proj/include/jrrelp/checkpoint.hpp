#pragma once

// Named-tensor checkpoint container. Binary, bit-exact round-trip:
//   magic "JRLP", version, scalar width, vocab hash, config hash,
//   tensor count, then per tensor: name, rows, cols, raw column-major data.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "jrrelp/autodiff.hpp"

namespace jrrelp {

namespace detail {

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint: truncated file");
  return v;
}

}  // namespace detail

inline constexpr uint32_t kCheckpointMagic = 0x4a524c50;  // "JRLP"
inline constexpr uint32_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const std::string& path,
                     const std::vector<ad::Parameter<S>*>& params,
                     uint64_t vocab_hash, uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  detail::put(out, kCheckpointMagic);
  detail::put(out, kCheckpointVersion);
  detail::put(out, static_cast<uint32_t>(sizeof(S)));
  detail::put(out, vocab_hash);
  detail::put(out, config_hash);
  detail::put(out, static_cast<uint32_t>(params.size()));
  for (const auto* p : params) {
    detail::put(out, static_cast<uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::put(out, static_cast<uint64_t>(p->value.rows()));
    detail::put(out, static_cast<uint64_t>(p->value.cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(S) * p->value.size()));
  }
  if (!out) throw IoError("failed while writing checkpoint: " + path);
}

// Loads into an existing parameter list (same names, same order, same shapes).
// Returns (vocab_hash, config_hash) for the caller to verify against its own.
template <typename S>
std::pair<uint64_t, uint64_t> load_checkpoint(
    const std::string& path, const std::vector<ad::Parameter<S>*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  if (detail::get<uint32_t>(in) != kCheckpointMagic)
    throw ValidationError("checkpoint: bad magic in " + path);
  if (detail::get<uint32_t>(in) != kCheckpointVersion)
    throw ValidationError("checkpoint: unsupported version in " + path);
  if (detail::get<uint32_t>(in) != sizeof(S))
    throw ValidationError("checkpoint: scalar width mismatch in " + path);
  const uint64_t vocab_hash = detail::get<uint64_t>(in);
  const uint64_t config_hash = detail::get<uint64_t>(in);
  const uint32_t count = detail::get<uint32_t>(in);
  if (count != params.size())
    throw ValidationError("checkpoint: tensor count mismatch in " + path);
  for (auto* p : params) {
    const uint32_t name_len = detail::get<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in || name != p->name)
      throw ValidationError("checkpoint: expected tensor " + p->name + ", found " +
                            name);
    const auto rows = static_cast<Eigen::Index>(detail::get<uint64_t>(in));
    const auto cols = static_cast<Eigen::Index>(detail::get<uint64_t>(in));
    if (rows != p->value.rows() || cols != p->value.cols())
      throw ValidationError("checkpoint: shape mismatch for tensor " + p->name);
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(sizeof(S) * p->value.size()));
    if (!in) throw IoError("checkpoint: truncated tensor data in " + path);
  }
  return {vocab_hash, config_hash};
}

}  // namespace jrrelp
