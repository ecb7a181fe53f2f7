#pragma once

#include <charconv>
#include <cstdint>
#include <string>

#include "music/common.hpp"

namespace music {

// Shortest decimal that parses back to the same double; keeps every text
// format exact under round-trip and byte-stable across runs.
inline std::string fmt_real(Real v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline Real parse_real(std::string_view s, const char* what) {
  Real v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError(std::string(what) + ": bad real value '" + std::string(s) + "'");
  return v;
}

inline int64_t parse_int(std::string_view s, const char* what) {
  int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError(std::string(what) + ": bad integer '" + std::string(s) + "'");
  return v;
}

inline uint64_t parse_u64(std::string_view s, const char* what) {
  uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError(std::string(what) + ": bad unsigned integer '" + std::string(s) + "'");
  return v;
}

}  // namespace music
