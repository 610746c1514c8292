#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "hydradoc/error.hpp"

// Little-endian primitives shared by the cache and model file formats.
namespace hydradoc::detail {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

inline void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void write_f32(std::ostream& os, float v) { os.write(reinterpret_cast<const char*>(&v), 4); }

inline void read_exact(std::istream& is, void* dst, std::size_t n, const char* what) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw CorruptError(std::string("unexpected end of file while reading ") + what);
  }
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  read_exact(is, &v, 4, what);
  return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
  std::uint64_t v = 0;
  read_exact(is, &v, 8, what);
  return v;
}

}  // namespace hydradoc::detail
