#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "gvae/common.hpp"

namespace gvae {

// Little-endian scalar IO for the on-disk formats. Explicit byte order keeps
// the files portable even though every supported target is little-endian.
inline void write_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
  os.write(b, 2);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline std::uint16_t read_u16(std::istream& is, const char* what) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw format_error(std::string("truncated file while reading ") + what);
  return std::uint16_t(b[0] | (std::uint16_t(b[1]) << 8));
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw format_error(std::string("truncated file while reading ") + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

inline void write_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
  char b[4];
  is.read(b, 4);
  if (!is || b[0] != magic[0] || b[1] != magic[1] || b[2] != magic[2] || b[3] != magic[3])
    throw format_error(std::string("bad magic bytes: not a ") + what + " file");
}

}  // namespace gvae
