#pragma once
// Little-endian encoding helpers shared by the stream, store and spill formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "emem/error.hpp"

namespace emem::bytes {

template <typename T>
T byteswap(T v) {
  static_assert(std::is_integral_v<T>);
  auto raw = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  std::reverse(raw.begin(), raw.end());
  return std::bit_cast<T>(raw);
}

template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) return byteswap(v);
  return v;
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  v = to_le(v);
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  out.insert(out.end(), p, p + 4);
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  v = to_le(v);
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  out.insert(out.end(), p, p + 8);
}

inline void put_f32(std::vector<unsigned char>& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

inline void put_f32s(std::vector<unsigned char>& out, std::span<const float> fs) {
  if constexpr (std::endian::native == std::endian::little) {
    const auto* p = reinterpret_cast<const unsigned char*>(fs.data());
    out.insert(out.end(), p, p + fs.size_bytes());
  } else {
    for (float f : fs) put_f32(out, f);
  }
}

// Bounds-checked cursor over a byte buffer. Reading past the end raises a
// kTruncated error naming how many bytes were missing.
class Reader {
 public:
  explicit Reader(std::span<const unsigned char> data) : data_(data) {}

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return data_.size() - offset_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw Error(ErrorCode::kTruncated,
                  std::string("truncated input: ") + what + " needs " +
                      std::to_string(n) + " bytes at offset " +
                      std::to_string(offset_) + ", " +
                      std::to_string(n - remaining()) + " bytes missing");
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, data_.data() + offset_, 4);
    offset_ += 4;
    return to_le(v);
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v;
    std::memcpy(&v, data_.data() + offset_, 8);
    offset_ += 8;
    return to_le(v);
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  void f32s(std::span<float> out, const char* what) {
    need(out.size_bytes(), what);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), data_.data() + offset_, out.size_bytes());
      offset_ += out.size_bytes();
    } else {
      for (float& f : out) f = f32(what);
    }
  }

  std::span<const unsigned char> raw(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.subspan(offset_, n);
    offset_ += n;
    return s;
  }

 private:
  std::span<const unsigned char> data_;
  std::size_t offset_ = 0;
};

std::vector<unsigned char> read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::span<const unsigned char> data);
void write_text_atomic(const std::string& path, const std::string& text);
std::uint32_t crc32(std::span<const unsigned char> data);
std::uint32_t crc32(std::span<const float> data);

}  // namespace emem::bytes
