#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "rdok/errors.hpp"

namespace rdok {

/// Side length of the largest coding block; image dimensions are padded to a multiple of it.
inline constexpr std::size_t kBlockSize = 64;

inline constexpr std::size_t padded_extent(std::size_t n) {
  return kBlockSize * ((n + kBlockSize - 1) / kBlockSize);
}

/**
 * Planar RGB image with samples in [0,1].
 *
 * The three planes are stored row-major at padded size. The region outside
 * width x height is filled by edge replication (see replicate_padding()).
 */
struct ImagePlanes {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t padded_width = 0;
  std::size_t padded_height = 0;
  std::array<std::vector<double>, 3> planes;

  ImagePlanes() = default;

  /// Allocates a width x height image (padded storage) filled with `value`.
  ImagePlanes(std::size_t w, std::size_t h, double value = 0.0)
      : width(w), height(h), padded_width(padded_extent(w)), padded_height(padded_extent(h)) {
    if (w == 0 || h == 0)
      throw InvalidArgument("image dimensions must be non-zero");
    for (auto& p : planes)
      p.assign(padded_width * padded_height, value);
  }

  double& at(int c, std::size_t x, std::size_t y) { return planes[c][y * padded_width + x]; }
  double at(int c, std::size_t x, std::size_t y) const { return planes[c][y * padded_width + x]; }

  std::size_t pixel_count() const { return width * height; }
  std::size_t blocks_x() const { return padded_width / kBlockSize; }
  std::size_t blocks_y() const { return padded_height / kBlockSize; }

  /// Overwrites the padding region by repeating the rightmost column and bottom row.
  void replicate_padding() {
    for (auto& p : planes) {
      for (std::size_t y = 0; y < height; ++y) {
        const double edge = p[y * padded_width + width - 1];
        std::fill(p.begin() + y * padded_width + width, p.begin() + (y + 1) * padded_width, edge);
      }
      for (std::size_t y = height; y < padded_height; ++y)
        std::copy_n(p.begin() + (height - 1) * padded_width, padded_width, p.begin() + y * padded_width);
    }
  }

  bool operator==(const ImagePlanes&) const = default;
};

/// Builds an image from `fn(channel, x, y)` over the original region, then pads.
template <class Fn>
ImagePlanes make_image(std::size_t width, std::size_t height, Fn&& fn) {
  ImagePlanes img(width, height);
  for (int c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        img.at(c, x, y) = std::clamp(static_cast<double>(fn(c, x, y)), 0.0, 1.0);
  img.replicate_padding();
  return img;
}

/// Round-half-up quantisation of a [0,1] sample to 8 bits; out-of-range input is clamped first.
inline std::uint8_t to_byte(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

/// Interleaved 8-bit RGB -> ImagePlanes (v/255, padded).
inline ImagePlanes from_rgb8(std::span<const std::uint8_t> rgb, std::size_t width, std::size_t height) {
  if (rgb.size() != width * height * 3)
    throw InvalidArgument("rgb buffer size does not match dimensions");
  ImagePlanes img(width, height);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, x, y) = rgb[(y * width + x) * 3 + c] / 255.0;
  img.replicate_padding();
  return img;
}

/// ImagePlanes -> interleaved 8-bit RGB of the original (cropped) region.
inline std::vector<std::uint8_t> to_rgb8(const ImagePlanes& img) {
  std::vector<std::uint8_t> out(img.width * img.height * 3);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        out[(y * img.width + x) * 3 + c] = to_byte(img.at(c, x, y));
  return out;
}

namespace detail {

class PpmHeaderReader {
public:
  explicit PpmHeaderReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t next_number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < data_.size() && data_[pos_] >= '0' && data_[pos_] <= '9') {
      value = value * 10 + (data_[pos_++] - '0');
      if (++digits > 9)
        throw FormatError("PPM header number too large");
    }
    if (digits == 0)
      throw FormatError("malformed PPM header");
    return value;
  }

  /// Consumes the single whitespace byte that separates the header from raster data.
  std::size_t raster_offset() {
    if (pos_ >= data_.size() || !std::isspace(data_[pos_]))
      throw FormatError("malformed PPM header");
    return pos_ + 1;
  }

private:
  void skip_space_and_comments() {
    while (pos_ < data_.size()) {
      if (std::isspace(data_[pos_])) {
        ++pos_;
      } else if (data_[pos_] == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n')
          ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad())
    throw IoError("error while reading '" + path + "'");
  return bytes;
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw IoError("error while writing '" + path + "'");
}

} // namespace detail

/// Parses a binary PPM (P6, maxval 255) held in memory.
inline ImagePlanes decode_ppm(std::span<const std::uint8_t> data) {
  if (data.size() < 2 || data[0] != 'P' || data[1] != '6')
    throw FormatError("unsupported image format (expected binary PPM 'P6')");
  detail::PpmHeaderReader reader(data.subspan(2));
  const std::size_t width = reader.next_number();
  const std::size_t height = reader.next_number();
  const std::size_t maxval = reader.next_number();
  if (width == 0 || height == 0)
    throw FormatError("zero-sized image");
  if (maxval != 255)
    throw FormatError("unsupported PPM maxval " + std::to_string(maxval) + " (only 255)");
  const std::size_t offset = 2 + reader.raster_offset();
  const std::size_t needed = width * height * 3;
  if (data.size() - offset < needed)
    throw FormatError("truncated PPM raster");
  return from_rgb8(data.subspan(offset, needed), width, height);
}

inline std::vector<std::uint8_t> encode_ppm(const ImagePlanes& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto raster = to_rgb8(img);
  out.insert(out.end(), raster.begin(), raster.end());
  return out;
}

inline ImagePlanes load_image(const std::string& path) {
  return decode_ppm(detail::read_file(path));
}

/// Writes the cropped width x height region as P6; samples are clamped and rounded half-up.
inline void save_image(const ImagePlanes& img, const std::string& path) {
  detail::write_file(path, encode_ppm(img));
}

} // namespace rdok
