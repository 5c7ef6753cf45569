#pragma once

// Little-endian block helpers shared by the mesh, snapshot and model files.

#include "otrom/core.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace otrom::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline void write_f64(std::ostream& os, const double* data, std::size_t n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void write_i32(std::ostream& os, const std::int32_t* data, std::size_t n) {
  os.write(reinterpret_cast<const char*>(data),
           static_cast<std::streamsize>(n * sizeof(std::int32_t)));
}

inline void read_f64(std::istream& is, double* data, std::size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw InvalidInput("io", std::string("truncated ") + what + " block");
}

inline void read_i32(std::istream& is, std::int32_t* data, std::size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(std::int32_t)));
  if (!is) throw InvalidInput("io", std::string("truncated ") + what + " block");
}

/// Exact text form of a double (C99 hexadecimal float).
inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw InvalidInput("io", "bad number '" + s + "'");
  return v;
}

/// Reads "key value" from the next header line and checks the key.
inline std::string expect_line(std::istream& is, const std::string& key) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidInput("io", "missing header line '" + key + "'");
  if (line.rfind(key, 0) != 0) throw InvalidInput("io", "expected '" + key + "', got '" + line + "'");
  return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
}

}  // namespace otrom::io
