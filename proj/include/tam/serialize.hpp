#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tam/tensor.hpp"

namespace tam {

// Binary primitives, explicitly little-endian so files are portable across
// hosts. Values are always stored as 32-bit IEEE-754 floats regardless of
// the in-memory scalar type.

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline float read_f32(std::istream& is) {
  const std::uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline std::string read_string(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw std::runtime_error("unexpected end of file");
  return s;
}

inline constexpr std::uint32_t kTensorVersion = 1;

// Tensor blob: "TAMT", u32 version, u32 rank, rank x u64 dims, float32 data.
template <class T>
void save_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write("TAMT", 4);
  write_u32(os, kTensorVersion);
  write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) write_u64(os, static_cast<std::uint64_t>(d));
  for (const T v : t.data) write_f32(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("tensor write failed");
}

template <class T>
TensorPtr<T> load_tensor(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "TAMT") {
    throw std::runtime_error("bad tensor magic (expected TAMT)");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kTensorVersion) {
    throw std::runtime_error("unsupported tensor format version " + std::to_string(version));
  }
  const std::uint32_t rank = read_u32(is);
  if (rank == 0 || rank > 8) throw std::runtime_error("bad tensor rank " + std::to_string(rank));
  std::vector<int> shape(rank);
  for (auto& d : shape) {
    const std::uint64_t v = read_u64(is);
    if (v == 0 || v > (1ull << 31)) throw std::runtime_error("bad tensor dimension");
    d = static_cast<int>(v);
  }
  auto t = Tensor<T>::make(shape, false);
  for (auto& v : t->data) v = static_cast<T>(read_f32(is));
  return t;
}

template <class T>
void save_tensor_file(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_tensor(os, t);
}

template <class T>
TensorPtr<T> load_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_tensor<T>(is);
}

}  // namespace tam
