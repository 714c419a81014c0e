#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "capsrep/errors.hpp"

namespace capsrep::util {

uint64_t fnv1a64(const void* data, std::size_t n);

// Little-endian append helpers for binary file formats.
void append_u32(std::vector<uint8_t>& out, uint32_t v);
void append_u64(std::vector<uint8_t>& out, uint64_t v);
void append_f32(std::vector<uint8_t>& out, float v);
void append_bytes(std::vector<uint8_t>& out, const void* data, std::size_t n);

// Bounds-checked little-endian cursor over an in-memory buffer.
class ByteReader {
 public:
  explicit ByteReader(const std::vector<uint8_t>& buf) : buf_(buf) {}

  uint32_t u32();
  uint64_t u64();
  float f32();
  void bytes(void* out, std::size_t n);
  std::size_t remaining() const { return buf_.size() - pos_; }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void require(std::size_t n) const;

  const std::vector<uint8_t>& buf_;
  std::size_t pos_ = 0;
};

void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file(const std::string& path);

}  // namespace capsrep::util
