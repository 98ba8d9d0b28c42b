#pragma once

// Little-endian primitive readers/writers shared by the on-disk containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "m2a/errors.hpp"

namespace m2a::io {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 8);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 4);
}

inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void write_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

inline void read_exact(std::istream& is, char* dst, std::size_t n) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw IoError("unexpected end of file");
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  read_exact(is, reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  read_exact(is, reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline std::string read_string(std::istream& is, std::size_t max_len = 1 << 16) {
  const std::uint32_t n = read_u32(is);
  if (n > max_len) throw IoError("string field too long");
  std::string s(n, '\0');
  read_exact(is, s.data(), n);
  return s;
}

inline void expect_magic(std::istream& is, const char (&magic)[5], const char* what) {
  char buf[4];
  read_exact(is, buf, 4);
  if (std::memcmp(buf, magic, 4) != 0) throw IoError(std::string(what) + ": bad magic");
}

}  // namespace m2a::io
