#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gvae {

// Error taxonomy. The CLI maps config/format errors to exit code 2 and
// numeric errors to exit code 3.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct config_error : error {
  using error::error;
};
struct dimension_error : error {
  using error::error;
};
struct contract_error : error {
  using error::error;
};
struct format_error : error {
  using error::error;
};
struct numeric_error : error {
  using error::error;
};

// 64-bit FNV-1a. Used for config hashing and for deriving per-stream RNG
// seeds from (seed, tag) so that streams stay independent of each other.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = char((seed >> (8 * i)) & 0xff);
  return fnv1a(tag, fnv1a(std::string_view(buf, 8)));
}

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace gvae
