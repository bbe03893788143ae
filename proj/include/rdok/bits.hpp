#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rdok/errors.hpp"

namespace rdok {

/// MSB-first bit packer; the last byte is zero-padded.
class BitWriter {
public:
  void put(bool bit) {
    if (count_ % 8 == 0)
      bytes_.push_back(0);
    if (bit)
      bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (count_ % 8));
    ++count_;
  }

  std::size_t bit_count() const { return count_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
  std::vector<std::uint8_t> bytes_;
  std::size_t count_ = 0;
};

class BitReader {
public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool get() {
    if (pos_ >= bytes_.size() * 8)
      throw FormatError("bit sequence too short");
    const bool bit = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
    ++pos_;
    return bit;
  }

  std::size_t position() const { return pos_; }
  std::size_t bytes_consumed() const { return (pos_ + 7) / 8; }

  /// Throws unless only zero padding (fewer than 8 bits) remains.
  void expect_end() const {
    const std::size_t total = bytes_.size() * 8;
    if (total - pos_ >= 8)
      throw FormatError("trailing data beyond byte padding");
    for (std::size_t i = pos_; i < total; ++i)
      if ((bytes_[i / 8] >> (7 - i % 8)) & 1u)
        throw FormatError("non-zero padding bits");
  }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

} // namespace rdok
