#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "dpir/errors.hpp"

namespace dpir {

// Little-endian append-only writer.
class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void put_tag(const char (&tag)[5]) { out_.insert(out_.end(), tag, tag + 4); }

 private:
  std::vector<std::uint8_t>& out_;
};

// Bounds-checked little-endian reader; throws FormatError on overrun.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  template <typename T>
  T get() {
    static_assert(std::is_unsigned_v<T>);
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool tag_is(const char (&tag)[5]) {
    need(4);
    const bool ok = std::memcmp(in_.data() + pos_, tag, 4) == 0;
    pos_ += 4;
    return ok;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("truncated input");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace dpir
