#include "jrrelp/hashing.hpp"

#include <charconv>
#include <cstdio>

#include "jrrelp/errors.hpp"

namespace jrrelp {

std::string hex_u64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

uint64_t parse_hex_u64(const std::string& s) {
  uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ValidationError("not a hex u64: " + s);
  return v;
}

}  // namespace jrrelp
