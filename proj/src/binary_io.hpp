#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "atr/error.hpp"

namespace atr::detail {

inline void write_f32_le(std::ostream& out, std::span<const float> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, &values[i], 4);
    bytes[4 * i + 0] = static_cast<char>(u & 0xff);
    bytes[4 * i + 1] = static_cast<char>((u >> 8) & 0xff);
    bytes[4 * i + 2] = static_cast<char>((u >> 16) & 0xff);
    bytes[4 * i + 3] = static_cast<char>((u >> 24) & 0xff);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void read_f32_le(std::istream& in, std::span<float> values, const std::string& what) {
  std::vector<unsigned char> bytes(values.size() * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError(what + ": truncated payload");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i]) |
                            (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    std::memcpy(&values[i], &u, 4);
  }
}

// Reads "key value..." lines up to and including the "end" line.
inline std::vector<std::string> read_header_lines(std::istream& in, const std::string& magic,
                                                  const std::string& what) {
  std::string line;
  if (!std::getline(in, line) || line.rfind(magic + " ", 0) != 0)
    throw IoError(what + ": missing " + magic + " magic");
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (line == "end") return lines;
    lines.push_back(line);
  }
  throw IoError(what + ": header not terminated");
}

}  // namespace atr::detail
