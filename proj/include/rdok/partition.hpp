#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rdok/bits.hpp"
#include "rdok/errors.hpp"
#include "rdok/image_io.hpp"

namespace rdok {

/// Side length of a mask cell (one quadrant of a 64-block).
inline constexpr std::size_t kCellSize = 32;

/// Coding granularity of a cell. Fine = 1, medium = 2, coarse = 3.
enum class Level : std::uint8_t { Fine = 1, Medium = 2, Coarse = 3 };

inline constexpr int level_value(Level l) { return static_cast<int>(l); }

/// Cell levels of one 64-block in Z-order: top-left, top-right, bottom-left, bottom-right.
using BlockPattern = std::array<std::uint8_t, 4>;

inline constexpr BlockPattern uniform_pattern(Level l) {
  const auto v = static_cast<std::uint8_t>(l);
  return {v, v, v, v};
}

inline int level_sum(const BlockPattern& p) { return p[0] + p[1] + p[2] + p[3]; }

/**
 * Per-32x32-cell level assignment for an image padded to the 64 grid.
 *
 * Cells are stored row-major on a (2*blocks_y) x (2*blocks_x) grid. A valid
 * field holds values in {1,2,3} and assigns level 3 only to whole 64-blocks.
 */
class MaskField {
public:
  MaskField() = default;
  MaskField(std::size_t blocks_x, std::size_t blocks_y, Level fill = Level::Coarse)
      : blocks_x_(blocks_x), blocks_y_(blocks_y),
        cells_(4 * blocks_x * blocks_y, static_cast<std::uint8_t>(fill)) {}

  static MaskField for_image(const ImagePlanes& img, Level fill = Level::Coarse) {
    return MaskField(img.blocks_x(), img.blocks_y(), fill);
  }

  std::size_t blocks_x() const { return blocks_x_; }
  std::size_t blocks_y() const { return blocks_y_; }
  std::size_t block_count() const { return blocks_x_ * blocks_y_; }
  std::size_t cells_x() const { return 2 * blocks_x_; }
  std::size_t cells_y() const { return 2 * blocks_y_; }

  std::uint8_t cell(std::size_t cx, std::size_t cy) const { return cells_[cy * cells_x() + cx]; }
  void set_cell(std::size_t cx, std::size_t cy, std::uint8_t v) { cells_[cy * cells_x() + cx] = v; }

  BlockPattern block(std::size_t index) const {
    const std::size_t bx = index % blocks_x_, by = index / blocks_x_;
    return {cell(2 * bx, 2 * by), cell(2 * bx + 1, 2 * by), cell(2 * bx, 2 * by + 1), cell(2 * bx + 1, 2 * by + 1)};
  }

  void set_block(std::size_t index, const BlockPattern& p) {
    const std::size_t bx = index % blocks_x_, by = index / blocks_x_;
    set_cell(2 * bx, 2 * by, p[0]);
    set_cell(2 * bx + 1, 2 * by, p[1]);
    set_cell(2 * bx, 2 * by + 1, p[2]);
    set_cell(2 * bx + 1, 2 * by + 1, p[3]);
  }

  std::span<const std::uint8_t> cells() const { return cells_; }

  std::size_t count(Level l) const {
    std::size_t n = 0;
    for (auto v : cells_)
      n += v == static_cast<std::uint8_t>(l);
    return n;
  }

  bool operator==(const MaskField&) const = default;

private:
  std::size_t blocks_x_ = 0;
  std::size_t blocks_y_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Summed-variance split thresholds for the 64 and 32 decisions.
struct VarianceThresholds {
  double th1 = 5e-4;
  double th2 = 2e-3;

  void validate() const {
    if (!(th1 > 0.0) || !(th2 > 0.0))
      throw InvalidArgument("variance thresholds must be positive");
  }
};

/**
 * Sum over the three channels of the population variance of a size x size block.
 * Operates on padded content.
 */
inline double block_variance(const ImagePlanes& img, std::size_t x0, std::size_t y0, std::size_t size) {
  if (size == 0 || x0 + size > img.padded_width || y0 + size > img.padded_height)
    throw InvalidArgument("block lies outside the padded image");
  const double n = static_cast<double>(size * size);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    // Samples are shifted by the block's first value, so constant blocks give exactly 0.
    const double shift = img.at(c, x0, y0);
    double sum = 0.0;
    for (std::size_t y = y0; y < y0 + size; ++y)
      for (std::size_t x = x0; x < x0 + size; ++x)
        sum += img.at(c, x, y) - shift;
    const double mean = sum / n;
    double sq = 0.0;
    for (std::size_t y = y0; y < y0 + size; ++y)
      for (std::size_t x = x0; x < x0 + size; ++x) {
        const double d = img.at(c, x, y) - shift - mean;
        sq += d * d;
      }
    total += sq / n;
  }
  return total;
}

/**
 * Variance-criterion mask.
 *
 * A 64-block at or below th1 stays coarse. Otherwise each 32-sub-block is
 * medium when its variance is at or below th2 and fine above it.
 */
inline MaskField generate_mask(const ImagePlanes& img, const VarianceThresholds& th = {}) {
  th.validate();
  MaskField mask = MaskField::for_image(img);
  for (std::size_t by = 0; by < mask.blocks_y(); ++by) {
    for (std::size_t bx = 0; bx < mask.blocks_x(); ++bx) {
      if (block_variance(img, bx * kBlockSize, by * kBlockSize, kBlockSize) <= th.th1)
        continue;
      for (std::size_t sy = 0; sy < 2; ++sy)
        for (std::size_t sx = 0; sx < 2; ++sx) {
          const std::size_t cx = 2 * bx + sx, cy = 2 * by + sy;
          const double v = block_variance(img, cx * kCellSize, cy * kCellSize, kCellSize);
          mask.set_cell(cx, cy, static_cast<std::uint8_t>(v <= th.th2 ? Level::Medium : Level::Fine));
        }
    }
  }
  return mask;
}

struct MaskViolation {
  enum class Kind { Range, Quadtree, Shape };
  Kind kind;
  std::size_t cx;
  std::size_t cy;
  std::string message;
};

/// Empty result iff the mask is well formed.
inline std::vector<MaskViolation> validate_mask(const MaskField& m) {
  std::vector<MaskViolation> out;
  if (m.cells().size() != m.cells_x() * m.cells_y()) {
    out.push_back({MaskViolation::Kind::Shape, 0, 0, "cell storage does not match block grid"});
    return out;
  }
  for (std::size_t cy = 0; cy < m.cells_y(); ++cy)
    for (std::size_t cx = 0; cx < m.cells_x(); ++cx) {
      const auto v = m.cell(cx, cy);
      if (v < 1 || v > 3)
        out.push_back({MaskViolation::Kind::Range, cx, cy, "level " + std::to_string(v) + " outside {1,2,3}"});
    }
  for (std::size_t b = 0; b < m.block_count(); ++b) {
    const auto p = m.block(b);
    int coarse = 0;
    for (auto v : p)
      coarse += v == 3;
    if (coarse != 0 && coarse != 4) {
      const std::size_t bx = b % m.blocks_x(), by = b / m.blocks_x();
      for (std::size_t i = 0; i < 4; ++i)
        if (p[i] == 3)
          out.push_back({MaskViolation::Kind::Quadtree, 2 * bx + i % 2, 2 * by + i / 2,
                         "level 3 cell inside a split 64-block"});
    }
  }
  return out;
}

inline bool is_valid(const MaskField& m) { return validate_mask(m).empty(); }

/// Bits per block: 0 for a coarse block; 1 then four Z-order bits (1 = fine, 0 = medium) for a split one.
inline void write_mask(BitWriter& out, const MaskField& m) {
  if (!is_valid(m))
    throw InvalidArgument("cannot serialize an invalid mask");
  for (std::size_t b = 0; b < m.block_count(); ++b) {
    const auto p = m.block(b);
    if (p[0] == 3) {
      out.put(false);
      continue;
    }
    out.put(true);
    for (auto v : p)
      out.put(v == 1);
  }
}

inline MaskField read_mask(BitReader& in, std::size_t blocks_x, std::size_t blocks_y) {
  MaskField m(blocks_x, blocks_y);
  for (std::size_t b = 0; b < m.block_count(); ++b) {
    if (!in.get())
      continue;
    BlockPattern p;
    for (auto& v : p)
      v = in.get() ? 1 : 2;
    m.set_block(b, p);
  }
  return m;
}

/// Packed, zero-padded serialization of a mask.
inline std::vector<std::uint8_t> serialize_mask(const MaskField& m) {
  BitWriter w;
  write_mask(w, m);
  return w.take();
}

/// Number of meaningful bits in serialize_mask(m), excluding padding.
inline std::size_t mask_bit_count(const MaskField& m) {
  std::size_t bits = 0;
  for (std::size_t b = 0; b < m.block_count(); ++b)
    bits += m.block(b)[0] == 3 ? 1 : 5;
  return bits;
}

/// Inverse of serialize_mask; rejects short input and anything past the padding byte.
inline MaskField deserialize_mask(std::span<const std::uint8_t> bytes, std::size_t blocks_x, std::size_t blocks_y) {
  BitReader r(bytes);
  MaskField m = read_mask(r, blocks_x, blocks_y);
  r.expect_end();
  return m;
}

} // namespace rdok
