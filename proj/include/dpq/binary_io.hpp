#pragma once

// Little-endian field codecs shared by every on-disk format. Readers track
// the byte offset so format errors can say where a file went wrong.

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "dpq/error.hpp"

namespace dpq::io {

using Bytes = std::vector<std::uint8_t>;

class Writer {
 public:
  void magic(std::string_view four_cc);
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_le(bits);
  }
  void raw(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }

  const Bytes& bytes() const noexcept { return buf_; }
  Bytes take() noexcept { return std::move(buf_); }

 private:
  template <class T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes buf_;
};

class Reader {
 public:
  Reader(const Bytes& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  void expect_magic(std::string_view four_cc);
  std::uint8_t u8();
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  void raw(std::uint8_t* dst, std::size_t n);

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  // Fails unless at least n more bytes are available.
  void need(std::size_t n, std::string_view field) const;
  // Fails if unread bytes remain.
  void expect_end() const;
  [[noreturn]] void error(std::string_view msg) const;

 private:
  template <class T>
  T get_le() {
    need(sizeof(T), "integer field");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  const Bytes& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::string& path);
void write_file(const std::string& path, const Bytes& bytes);
void write_text(const std::string& path, std::string_view text);

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(const std::uint8_t* data, std::size_t n);
inline Digest sha256(const Bytes& b) { return sha256(b.data(), b.size()); }
std::string to_hex(const Digest& d);

}  // namespace dpq::io
