#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qpi {

using u8 = std::uint8_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i64 = std::int64_t;

// All on-disk and on-wire integers are little-endian, independent of host order.

inline void put_u32_le(std::vector<u8>& out, u32 v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<u8>(v >> (8 * i)));
}

inline void put_u64_le(std::vector<u8>& out, u64 v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<u8>(v >> (8 * i)));
}

inline u32 get_u32_le(const u8* p) {
  u32 v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<u32>(p[i]) << (8 * i);
  return v;
}

inline u64 get_u64_le(const u8* p) {
  u64 v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<u64>(p[i]) << (8 * i);
  return v;
}

/// Bounds-checked sequential reader over a byte buffer.
class ByteReader {
 public:
  explicit ByteReader(std::span<const u8> buf) : buf_(buf) {}

  u8 read_u8() {
    need(1);
    return buf_[pos_++];
  }

  u32 read_u32_le() {
    need(4);
    u32 v = get_u32_le(buf_.data() + pos_);
    pos_ += 4;
    return v;
  }

  u64 read_u64_le() {
    need(8);
    u64 v = get_u64_le(buf_.data() + pos_);
    pos_ += 8;
    return v;
  }

  void read_bytes(u8* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t remaining() const { return buf_.size() - pos_; }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw std::runtime_error("serialize: truncated buffer");
  }

  std::span<const u8> buf_;
  std::size_t pos_ = 0;
};

}  // namespace qpi
