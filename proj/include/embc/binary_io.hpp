#pragma once

// Little-endian byte streams and MSB-first bit packing shared by the
// EMB1 / LQE1 / SNE1 / LSH1 / WTA1 file formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embc/error.hpp"
#include "embc/vocabulary.hpp"

namespace embc::io {

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void magic(std::string_view tag) { out_.write(tag.data(), static_cast<std::streamsize>(tag.size())); }

  void bytes(std::span<const std::uint8_t> data) {
    out_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  }

  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void check() const {
    if (!out_) throw InputError("write failed");
  }

 private:
  void le(std::uint64_t v, int n) {
    std::array<char, 8> buf{};
    for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out_.write(buf.data(), n);
  }

  std::ostream& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  void expect_magic(std::string_view tag) {
    std::string got(tag.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in_ || got != tag) throw InputError("bad magic: expected " + std::string(tag));
  }

  std::vector<std::uint8_t> bytes(std::size_t n) {
    std::vector<std::uint8_t> out(n);
    in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw InputError("truncated stream");
    return out;
  }

  std::string string() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (static_cast<std::size_t>(in_.gcount()) != n) throw InputError("truncated stream");
    return s;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::uint64_t le(int n) {
    std::array<unsigned char, 8> buf{};
    in_.read(reinterpret_cast<char*>(buf.data()), n);
    if (in_.gcount() != n) throw InputError("truncated stream");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }

  std::istream& in_;
};

// Appends fields MSB-first; align() pads the current byte with zero bits.
class BitWriter {
 public:
  void put(std::uint64_t value, unsigned nbits) {
    for (unsigned i = nbits; i-- > 0;) {
      if (used_ == 0) bytes_.push_back(0);
      if ((value >> i) & 1u) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> used_);
      used_ = (used_ + 1) % 8;
    }
  }

  void align() { used_ = 0; }

  [[nodiscard]] std::size_t bit_count() const {
    return used_ == 0 ? bytes_.size() * 8 : (bytes_.size() - 1) * 8 + used_;
  }
  [[nodiscard]] const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
  unsigned used_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint64_t get(unsigned nbits) {
    std::uint64_t v = 0;
    for (unsigned i = 0; i < nbits; ++i) {
      const std::size_t byte = pos_ / 8;
      if (byte >= data_.size()) throw InputError("truncated bit stream");
      v = (v << 1) | ((data_[byte] >> (7 - pos_ % 8)) & 1u);
      ++pos_;
    }
    return v;
  }

  void align() { pos_ = (pos_ + 7) / 8 * 8; }

  [[nodiscard]] std::size_t byte_position() const { return (pos_ + 7) / 8; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline void write_vocabulary(ByteWriter& w, const Vocabulary& vocab) {
  for (const auto& word : vocab.words()) w.string(word);
}

inline Vocabulary read_vocabulary(ByteReader& r, std::size_t count) {
  std::vector<std::string> words;
  words.reserve(count);
  for (std::size_t i = 0; i < count; ++i) words.push_back(r.string());
  return Vocabulary(std::move(words));
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);
  return in;
}

// First four bytes of a file, or empty if shorter.
inline std::string sniff_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);
  std::string tag(4, '\0');
  in.read(tag.data(), 4);
  if (in.gcount() != 4) return {};
  return tag;
}

}  // namespace embc::io
