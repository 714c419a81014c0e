#include "capsrep/util.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace capsrep::util {

uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const uint8_t*>(data);
  uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

void append_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int s = 0; s < 64; s += 8) out.push_back(static_cast<uint8_t>(v >> s));
}

void append_f32(std::vector<uint8_t>& out, float v) {
  append_u32(out, std::bit_cast<uint32_t>(v));
}

void append_bytes(std::vector<uint8_t>& out, const void* data, std::size_t n) {
  const auto* p = static_cast<const uint8_t*>(data);
  out.insert(out.end(), p, p + n);
}

void ByteReader::require(std::size_t n) const {
  if (buf_.size() - pos_ < n) {
    throw IoError("truncated buffer: need " + std::to_string(n) +
                  " bytes, have " + std::to_string(buf_.size() - pos_));
  }
}

uint32_t ByteReader::u32() {
  require(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

uint64_t ByteReader::u64() {
  require(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

void ByteReader::bytes(void* out, std::size_t n) {
  require(n);
  std::memcpy(out, buf_.data() + pos_, n);
  pos_ += n;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open for reading: " + path);
  const std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw IoError("read failed: " + path);
  return bytes;
}

}  // namespace capsrep::util
