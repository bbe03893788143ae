#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "rdok/bits.hpp"
#include "rdok/dct.hpp"
#include "rdok/entropy.hpp"
#include "rdok/errors.hpp"
#include "rdok/image_io.hpp"
#include "rdok/partition.hpp"

namespace rdok {

/// Box-downsampling factor applied to a coding unit at each level (index 0 unused).
inline constexpr std::array<std::size_t, 4> kLevelFactor = {0, 1, 2, 4};

/// Coefficients are grouped into bands by u+v, with everything from 7 up sharing a band.
inline constexpr std::size_t kBandGroups = 8;
inline constexpr std::size_t kScaleTableSize = 3 * kBandGroups;

inline constexpr std::size_t band_of(std::size_t coeff_index) {
  const std::size_t diag = coeff_index / kDctSize + coeff_index % kDctSize;
  return diag < kBandGroups ? diag : kBandGroups - 1;
}

inline constexpr std::size_t scale_slot(Level level, std::size_t band) {
  return (static_cast<std::size_t>(level) - 1) * kBandGroups + band;
}

struct CodecConfig {
  double quant_step = 0.02;
  int alphabet = kAlphabetBound;

  void validate() const {
    if (!(quant_step > 0.0) || !std::isfinite(quant_step))
      throw InvalidArgument("quant_step must be positive");
    if (alphabet < 1 || 2 * static_cast<long>(alphabet) + 1 > static_cast<long>(kProbTotal))
      throw InvalidArgument("alphabet bound out of range");
  }
};

/// Serialized .rdok stream. Rate is always the exact byte length times eight.
struct Bitstream {
  std::vector<std::uint8_t> bytes;

  std::uint64_t bit_count() const { return static_cast<std::uint64_t>(bytes.size()) * 8; }
  bool operator==(const Bitstream&) const = default;
};

inline constexpr std::array<std::uint8_t, 4> kMagic = {'R', 'D', 'O', 'K'};
inline constexpr std::uint8_t kStreamVersion = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 1 + 4 + 4 + 4 + kScaleTableSize;

struct StreamHeader {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  float quant_step = 0.0f;
  std::array<std::uint8_t, kScaleTableSize> scale_codes{};
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8)
    out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  return (std::uint32_t{in[at]} << 24) | (std::uint32_t{in[at + 1]} << 16) | (std::uint32_t{in[at + 2]} << 8) |
         std::uint32_t{in[at + 3]};
}

} // namespace detail

inline std::vector<std::uint8_t> write_header(const StreamHeader& h) {
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.push_back(kStreamVersion);
  detail::put_u32(out, h.width);
  detail::put_u32(out, h.height);
  detail::put_u32(out, std::bit_cast<std::uint32_t>(h.quant_step));
  out.insert(out.end(), h.scale_codes.begin(), h.scale_codes.end());
  return out;
}

inline StreamHeader parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes)
    throw FormatError("stream shorter than its header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw FormatError("bad magic (not an RDOK stream)");
  if (bytes[4] != kStreamVersion)
    throw FormatError("unsupported stream version " + std::to_string(bytes[4]));
  StreamHeader h;
  h.width = detail::get_u32(bytes, 5);
  h.height = detail::get_u32(bytes, 9);
  h.quant_step = std::bit_cast<float>(detail::get_u32(bytes, 13));
  std::copy_n(bytes.begin() + 17, kScaleTableSize, h.scale_codes.begin());
  if (h.width == 0 || h.height == 0 || h.width > (1u << 16) || h.height > (1u << 16))
    throw FormatError("corrupt header: bad dimensions");
  if (!(h.quant_step > 0.0f) || !std::isfinite(h.quant_step))
    throw FormatError("corrupt header: bad quant_step");
  return h;
}

/// Region coded as one transform unit: a whole coarse 64-block or one 32-quadrant.
struct CodingUnit {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t size = 0;
  Level level = Level::Coarse;

  std::size_t reduced_size() const { return size / kLevelFactor[static_cast<int>(level)]; }
};

/// Units in coding order: 64-blocks in raster order, quadrants in Z-order.
inline std::vector<CodingUnit> coding_units(const MaskField& m) {
  std::vector<CodingUnit> units;
  for (std::size_t b = 0; b < m.block_count(); ++b) {
    const std::size_t x0 = (b % m.blocks_x()) * kBlockSize, y0 = (b / m.blocks_x()) * kBlockSize;
    const auto p = m.block(b);
    if (p[0] == 3) {
      units.push_back({x0, y0, kBlockSize, Level::Coarse});
      continue;
    }
    for (std::size_t i = 0; i < 4; ++i)
      units.push_back({x0 + (i % 2) * kCellSize, y0 + (i / 2) * kCellSize, kCellSize, static_cast<Level>(p[i])});
  }
  return units;
}

/// Quantised coefficients of one unit, per channel, 8x8 blocks in raster order.
struct UnitCoefficients {
  CodingUnit unit;
  std::array<std::vector<int>, 3> q;
};

namespace detail {

/// Reconstructed per-cell, per-channel means used for DC prediction.
class PredictionState {
public:
  PredictionState(std::size_t cells_x, std::size_t cells_y)
      : cells_x_(cells_x), means_(3 * cells_x * cells_y, 0.0) {}

  double predict(const CodingUnit& u, int c) const {
    const std::size_t cx = u.x0 / kCellSize, cy = u.y0 / kCellSize;
    const bool has_left = cx > 0, has_top = cy > 0;
    if (has_left && has_top)
      return 0.5 * (mean(cx - 1, cy, c) + mean(cx, cy - 1, c));
    if (has_left)
      return mean(cx - 1, cy, c);
    if (has_top)
      return mean(cx, cy - 1, c);
    return 0.5;
  }

  void store(const CodingUnit& u, int c, double value) {
    const std::size_t n = u.size / kCellSize;
    for (std::size_t dy = 0; dy < n; ++dy)
      for (std::size_t dx = 0; dx < n; ++dx)
        means_[index(u.x0 / kCellSize + dx, u.y0 / kCellSize + dy, c)] = value;
  }

private:
  std::size_t index(std::size_t cx, std::size_t cy, int c) const { return (cy * cells_x_ + cx) * 3 + c; }
  double mean(std::size_t cx, std::size_t cy, int c) const { return means_[index(cx, cy, c)]; }

  std::size_t cells_x_;
  std::vector<double> means_;
};

inline std::vector<double> box_downsample(const ImagePlanes& img, int c, const CodingUnit& u) {
  const std::size_t f = kLevelFactor[static_cast<int>(u.level)], n = u.reduced_size();
  const double inv = 1.0 / static_cast<double>(f * f);
  std::vector<double> out(n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double s = 0.0;
      for (std::size_t dy = 0; dy < f; ++dy)
        for (std::size_t dx = 0; dx < f; ++dx)
          s += img.at(c, u.x0 + x * f + dx, u.y0 + y * f + dy);
      out[y * n + x] = s * inv;
    }
  return out;
}

struct UpsampleTap {
  std::size_t i0, i1;
  double t;
};

/// Bilinear taps with half-pixel centres, clamped to the unit.
inline std::vector<UpsampleTap> upsample_taps(std::size_t n, std::size_t f) {
  std::vector<UpsampleTap> taps(n * f);
  for (std::size_t i = 0; i < n * f; ++i) {
    const double s = std::clamp((static_cast<double>(i) + 0.5) / static_cast<double>(f) - 0.5, 0.0,
                                static_cast<double>(n - 1));
    const auto i0 = static_cast<std::size_t>(s);
    taps[i] = {i0, std::min(i0 + 1, n - 1), s - static_cast<double>(i0)};
  }
  return taps;
}

/// Writes a reduced-resolution reconstruction back at native size, clamped to [0,1].
inline void upsample_into(ImagePlanes& out, int c, const CodingUnit& u, const std::vector<double>& reduced) {
  const std::size_t f = kLevelFactor[static_cast<int>(u.level)], n = u.reduced_size();
  if (f == 1) {
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        out.at(c, u.x0 + x, u.y0 + y) = std::clamp(reduced[y * n + x], 0.0, 1.0);
    return;
  }
  const auto taps = upsample_taps(n, f);
  for (std::size_t y = 0; y < u.size; ++y) {
    const auto& ty = taps[y];
    for (std::size_t x = 0; x < u.size; ++x) {
      const auto& tx = taps[x];
      const double a = reduced[ty.i0 * n + tx.i0], b = reduced[ty.i0 * n + tx.i1];
      const double cc = reduced[ty.i1 * n + tx.i0], d = reduced[ty.i1 * n + tx.i1];
      const double top = a + tx.t * (b - a);
      const double bottom = cc + tx.t * (d - cc);
      out.at(c, u.x0 + x, u.y0 + y) = std::clamp(top + ty.t * (bottom - top), 0.0, 1.0);
    }
  }
}

/// Residual DCT and quantisation of a reduced unit (n x n, n a multiple of 8).
inline std::vector<int> transform_quantize(const std::vector<double>& residual, std::size_t n, double step,
                                           int bound) {
  std::vector<int> q;
  q.reserve(n * n);
  for (std::size_t by = 0; by < n; by += kDctSize)
    for (std::size_t bx = 0; bx < n; bx += kDctSize) {
      DctBlock blk;
      for (std::size_t y = 0; y < kDctSize; ++y)
        for (std::size_t x = 0; x < kDctSize; ++x)
          blk[y * kDctSize + x] = residual[(by + y) * n + bx + x];
      const auto coeffs = dct8x8_forward(blk);
      for (double v : coeffs)
        q.push_back(static_cast<int>(std::clamp(std::round(v / step), static_cast<double>(-bound),
                                                static_cast<double>(bound))));
    }
  return q;
}

/// pred + IDCT(q * step) over the reduced unit.
inline std::vector<double> dequantize_reconstruct(std::span<const int> q, std::size_t n, double step, double pred) {
  std::vector<double> out(n * n);
  std::size_t k = 0;
  for (std::size_t by = 0; by < n; by += kDctSize)
    for (std::size_t bx = 0; bx < n; bx += kDctSize) {
      DctBlock coeffs;
      for (auto& v : coeffs)
        v = q[k++] * step;
      const auto blk = dct8x8_inverse(coeffs);
      for (std::size_t y = 0; y < kDctSize; ++y)
        for (std::size_t x = 0; x < kDctSize; ++x)
          out[(by + y) * n + bx + x] = pred + blk[y * kDctSize + x];
    }
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v)
    s += x;
  return s / static_cast<double>(v.size());
}

inline void check_mask_matches(const ImagePlanes& img, const MaskField& m) {
  if (m.blocks_x() != img.blocks_x() || m.blocks_y() != img.blocks_y())
    throw InvalidArgument("mask grid does not match the image's 64-block grid");
  const auto violations = validate_mask(m);
  if (!violations.empty())
    throw InvalidArgument("invalid mask: " + violations.front().message);
}

/// Stream-level quantiser step: the binary32 value that is written to the header.
inline double stream_step(double quant_step) { return static_cast<double>(static_cast<float>(quant_step)); }

} // namespace detail

/// Result of running the encoder's analysis and local reconstruction.
struct Analysis {
  std::vector<UnitCoefficients> units;
  ImagePlanes reconstruction;
};

/**
 * Transforms and quantises every coding unit in order, reconstructing as it
 * goes so each unit's DC prediction sees decoder-identical neighbour means.
 */
inline Analysis analyze(const ImagePlanes& img, const MaskField& mask, const CodecConfig& cfg) {
  cfg.validate();
  detail::check_mask_matches(img, mask);
  const double step = detail::stream_step(cfg.quant_step);
  Analysis a;
  a.reconstruction = ImagePlanes(img.width, img.height);
  detail::PredictionState pred(mask.cells_x(), mask.cells_y());
  for (const auto& u : coding_units(mask)) {
    UnitCoefficients uc{u, {}};
    const std::size_t n = u.reduced_size();
    for (int c = 0; c < 3; ++c) {
      const double p = pred.predict(u, c);
      auto reduced = detail::box_downsample(img, c, u);
      for (auto& v : reduced)
        v -= p;
      uc.q[c] = detail::transform_quantize(reduced, n, step, cfg.alphabet);
      const auto rec = detail::dequantize_reconstruct(uc.q[c], n, step, p);
      pred.store(u, c, detail::mean_of(rec));
      detail::upsample_into(a.reconstruction, c, u, rec);
    }
    a.units.push_back(std::move(uc));
  }
  return a;
}

/// Per-band Laplace scales estimated as mean |q|, as transmitted 8-bit codes.
inline std::array<std::uint8_t, kScaleTableSize> estimate_scale_codes(const std::vector<UnitCoefficients>& units) {
  std::array<double, kScaleTableSize> sum{};
  std::array<std::size_t, kScaleTableSize> count{};
  for (const auto& uc : units)
    for (const auto& q : uc.q)
      for (std::size_t i = 0; i < q.size(); ++i) {
        const std::size_t slot = scale_slot(uc.unit.level, band_of(i % (kDctSize * kDctSize)));
        sum[slot] += std::abs(q[i]);
        ++count[slot];
      }
  std::array<std::uint8_t, kScaleTableSize> codes{};
  for (std::size_t s = 0; s < kScaleTableSize; ++s)
    codes[s] = encode_scale(count[s] ? sum[s] / static_cast<double>(count[s]) : 0.0);
  return codes;
}

namespace detail {

/// Tables for every 8-bit scale code at the default alphabet, built once.
inline const std::vector<SymbolTable>& default_scale_tables() {
  static const auto tables = [] {
    std::vector<SymbolTable> t;
    t.reserve(256);
    for (int code = 0; code < 256; ++code)
      t.push_back(SymbolTable::laplace({0.0, decode_scale(static_cast<std::uint8_t>(code))}, kAlphabetBound));
    return t;
  }();
  return tables;
}

inline std::vector<SymbolTable> band_tables(const std::array<std::uint8_t, kScaleTableSize>& codes, int bound) {
  std::vector<SymbolTable> tables;
  tables.reserve(kScaleTableSize);
  for (auto code : codes)
    tables.push_back(bound == kAlphabetBound ? default_scale_tables()[code]
                                             : SymbolTable::laplace({0.0, decode_scale(code)}, bound));
  return tables;
}

} // namespace detail

/**
 * Codec contract driven by the RDO search. decode(encode_with_mask(x, m)) must
 * be deterministic and rate_of must equal the stream's exact length in bits.
 */
class CodecBackend {
public:
  virtual ~CodecBackend() = default;
  virtual Bitstream encode_with_mask(const ImagePlanes& img, const MaskField& mask, const CodecConfig& cfg) const = 0;
  virtual ImagePlanes decode(const Bitstream& bs, const CodecConfig& cfg) const = 0;
  virtual std::uint64_t rate_of(const Bitstream& bs) const { return bs.bit_count(); }
};

/// Bits per original (uncropped) pixel.
inline double bpp(const Bitstream& bs, const ImagePlanes& img) {
  return static_cast<double>(bs.bit_count()) / static_cast<double>(img.pixel_count());
}

/// Everything decode() recovers from a stream besides the image.
struct DecodedStream {
  StreamHeader header;
  MaskField mask;
  std::vector<UnitCoefficients> units;
  ImagePlanes image;
};

/**
 * Hierarchical block-transform codec. Coarse units are box-downsampled by 4,
 * medium by 2, fine not at all; every unit subtracts a causal DC prediction,
 * is coded as 8x8 DCT blocks and entropy-coded with per-band Laplace models.
 */
class SurrogateCodec final : public CodecBackend {
public:
  Bitstream encode_with_mask(const ImagePlanes& img, const MaskField& mask, const CodecConfig& cfg) const override {
    return encode_analysis(img, mask, cfg, analyze(img, mask, cfg));
  }

  /// Serializes an analysis produced by analyze(img, mask, cfg).
  static Bitstream encode_analysis(const ImagePlanes& img, const MaskField& mask, const CodecConfig& cfg,
                                   const Analysis& a) {
    StreamHeader h;
    h.width = static_cast<std::uint32_t>(img.width);
    h.height = static_cast<std::uint32_t>(img.height);
    h.quant_step = static_cast<float>(cfg.quant_step);
    h.scale_codes = estimate_scale_codes(a.units);

    Bitstream bs{write_header(h)};
    const auto mask_bytes = serialize_mask(mask);
    bs.bytes.insert(bs.bytes.end(), mask_bytes.begin(), mask_bytes.end());

    const auto tables = detail::band_tables(h.scale_codes, cfg.alphabet);
    bool any = false;
    RangeEncoder enc;
    for (const auto& uc : a.units)
      for (const auto& q : uc.q)
        for (std::size_t i = 0; i < q.size(); ++i) {
          enc.encode(tables[scale_slot(uc.unit.level, band_of(i % (kDctSize * kDctSize)))], q[i]);
          any = true;
        }
    if (any) {
      const auto payload = enc.finish();
      bs.bytes.insert(bs.bytes.end(), payload.begin(), payload.end());
    }
    return bs;
  }

  ImagePlanes decode(const Bitstream& bs, const CodecConfig& cfg) const override {
    return decode_stream(bs, cfg).image;
  }

  static DecodedStream decode_stream(const Bitstream& bs, const CodecConfig& cfg) {
    cfg.validate();
    const std::span<const std::uint8_t> bytes(bs.bytes);
    DecodedStream out;
    out.header = parse_header(bytes);
    out.image = ImagePlanes(out.header.width, out.header.height);

    BitReader mask_reader(bytes.subspan(kHeaderBytes));
    out.mask = read_mask(mask_reader, out.image.blocks_x(), out.image.blocks_y());
    const auto violations = validate_mask(out.mask);
    if (!violations.empty())
      throw FormatError("mask constraint violation in stream: " + violations.front().message);
    const std::size_t mask_end = kHeaderBytes + mask_reader.bytes_consumed();
    for (std::size_t i = mask_reader.position(); i < mask_reader.bytes_consumed() * 8; ++i)
      if ((bytes[kHeaderBytes + i / 8] >> (7 - i % 8)) & 1u)
        throw FormatError("non-zero mask padding");

    const double step = static_cast<double>(out.header.quant_step);
    const auto tables = detail::band_tables(out.header.scale_codes, cfg.alphabet);
    const auto payload = bytes.subspan(mask_end);
    detail::PredictionState pred(out.mask.cells_x(), out.mask.cells_y());
    const auto units = coding_units(out.mask);
    RangeDecoder dec(payload);
    for (const auto& u : units) {
      UnitCoefficients uc{u, {}};
      const std::size_t n = u.reduced_size();
      for (int c = 0; c < 3; ++c) {
        auto& q = uc.q[c];
        q.resize(n * n);
        for (std::size_t i = 0; i < q.size(); ++i)
          q[i] = dec.decode(tables[scale_slot(u.level, band_of(i % (kDctSize * kDctSize)))]);
        const double p = pred.predict(u, c);
        const auto rec = detail::dequantize_reconstruct(q, n, step, p);
        pred.store(u, c, detail::mean_of(rec));
        detail::upsample_into(out.image, c, u, rec);
      }
      out.units.push_back(std::move(uc));
    }
    if (dec.bytes_consumed() != payload.size())
      throw FormatError("trailing bytes after coefficient payload");
    return out;
  }
};

} // namespace rdok
