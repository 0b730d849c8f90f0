#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace jrrelp {

// FNV-1a, used for vocab/config/dataset fingerprints in manifests and
// checkpoints. Not cryptographic; only has to catch artifact mismatches.
class Fnv1a {
 public:
  Fnv1a& update(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  Fnv1a& update(std::string_view s) { return update(s.data(), s.size()); }

  Fnv1a& update_u64(uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    return update(buf, 8);
  }

  uint64_t digest() const { return h_; }

 private:
  uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline uint64_t fnv1a(std::string_view s) { return Fnv1a().update(s).digest(); }

std::string hex_u64(uint64_t v);
uint64_t parse_hex_u64(const std::string& s);

}  // namespace jrrelp
