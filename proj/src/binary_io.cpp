#include "dpq/binary_io.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iterator>

namespace dpq::io {

void Writer::magic(std::string_view four_cc) {
  for (char c : four_cc) buf_.push_back(static_cast<std::uint8_t>(c));
}

void Reader::error(std::string_view msg) const {
  fail(ErrorKind::Format, what_ + ": " + std::string(msg) + " at byte offset " + std::to_string(pos_));
}

void Reader::need(std::size_t n, std::string_view field) const {
  if (remaining() < n) {
    error("truncated " + std::string(field) + " (need " + std::to_string(n) + " bytes, have " +
          std::to_string(remaining()) + ")");
  }
}

void Reader::expect_magic(std::string_view four_cc) {
  need(four_cc.size(), "magic");
  for (std::size_t i = 0; i < four_cc.size(); ++i) {
    if (bytes_[pos_ + i] != static_cast<std::uint8_t>(four_cc[i])) {
      error("bad magic, expected \"" + std::string(four_cc) + "\"");
    }
  }
  pos_ += four_cc.size();
}

std::uint8_t Reader::u8() {
  need(1, "byte field");
  return bytes_[pos_++];
}

void Reader::raw(std::uint8_t* dst, std::size_t n) {
  need(n, "payload");
  std::memcpy(dst, bytes_.data() + pos_, n);
  pos_ += n;
}

void Reader::expect_end() const {
  if (remaining() != 0) error(std::to_string(remaining()) + " trailing bytes");
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path);
}

void write_text(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorKind::Io, "short write to " + path);
}

Digest sha256(const std::uint8_t* data, std::size_t n) {
  Digest d{};
  unsigned int len = 0;
  if (EVP_Digest(data, n, d.data(), &len, EVP_sha256(), nullptr) != 1 || len != d.size()) {
    fail(ErrorKind::Numeric, "sha256 failed");
  }
  return d;
}

std::string to_hex(const Digest& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : d) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 15]);
  }
  return s;
}

}  // namespace dpq::io
