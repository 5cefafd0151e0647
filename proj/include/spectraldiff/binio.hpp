#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "spectraldiff/core.hpp"

namespace spectraldiff {
namespace binio {

// All on-disk formats are little-endian. The helpers below assume a
// little-endian host (checked once at startup of any reader/writer).
inline void require_little_endian() {
  const uint32_t probe = 1;
  char b;
  std::memcpy(&b, &probe, 1);
  if (b != 1) throw std::runtime_error("big-endian hosts are not supported");
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError(std::string("truncated file while reading ") + what);
  return v;
}

template <typename T>
void write_array(std::ostream& os, const T* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
void read_array(std::istream& is, T* p, size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw FormatError(std::string("truncated file while reading ") + what);
}

inline void expect_magic(std::istream& is, const char magic[4], const char* format_name) {
  char got[4];
  is.read(got, 4);
  if (!is || std::memcmp(got, magic, 4) != 0)
    throw FormatError(std::string("not a ") + format_name + " file (bad magic)");
}

}  // namespace binio
}  // namespace spectraldiff
