#pragma once

#include "priming/types.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace priming::detail {

inline std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) fail(ErrorKind::IoError, "cannot open for reading: " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) fail(ErrorKind::IoError, "cannot open for writing: " + path.string());
  return out;
}

inline void put_u32le(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void put_u64le(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

/// Exact-size reader; short reads surface as TruncatedPayload.
class ByteReader {
 public:
  ByteReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      fail(ErrorKind::TruncatedPayload, name_ + ": unexpected end of file");
    }
  }

  std::uint32_t u32le() {
    unsigned char b[4];
    read(b, 4);
    return get_u32le(b);
  }

  std::uint64_t u64le() {
    unsigned char b[8];
    read(b, 8);
    return get_u64le(b);
  }

 private:
  std::istream& in_;
  std::string name_;
};

}  // namespace priming::detail
