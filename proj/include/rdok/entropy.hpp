#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rdok/errors.hpp"

namespace rdok {

/// Symbols are integers in [-kAlphabetBound, kAlphabetBound].
inline constexpr int kAlphabetBound = 255;

/// Cumulative frequency tables are quantised to this many bits.
inline constexpr unsigned kProbBits = 16;
inline constexpr std::uint32_t kProbTotal = 1u << kProbBits;

/// Smallest probability any symbol of the alphabet can receive.
inline constexpr double kMinProbability = 1.0 / kProbTotal;

struct LaplaceModel {
  double mu = 0.0;
  double b = 1.0;

  void validate() const {
    if (!(b > 0.0) || !std::isfinite(b) || !std::isfinite(mu))
      throw InvalidArgument("Laplace scale must be positive and finite");
  }
  auto operator<=>(const LaplaceModel&) const = default;
};

inline double laplace_cdf(const LaplaceModel& m, double x) {
  const double z = (x - m.mu) / m.b;
  return z < 0.0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
}

namespace detail {

/// Unit-bin masses over [-bound, bound], floored at kMinProbability and renormalised.
inline std::vector<double> laplace_bin_masses(const LaplaceModel& m, int bound) {
  m.validate();
  std::vector<double> p(2 * static_cast<std::size_t>(bound) + 1);
  double sum = 0.0;
  for (int k = -bound; k <= bound; ++k) {
    // Bin edges relative to mu; each case uses the tail that keeps the difference well conditioned
    // and depends only on distances from mu, so bins mirrored about mu get identical masses.
    const double lo = (k - 0.5 - m.mu) / m.b, hi = (k + 0.5 - m.mu) / m.b;
    double mass;
    if (hi <= 0.0)
      mass = 0.5 * (std::exp(hi) - std::exp(lo));
    else if (lo >= 0.0)
      mass = 0.5 * (std::exp(-lo) - std::exp(-hi));
    else
      mass = 1.0 - 0.5 * std::exp(-hi) - 0.5 * std::exp(lo);
    mass = std::max(mass, kMinProbability);
    p[k + bound] = mass;
    sum += mass;
  }
  for (auto& v : p)
    v /= sum;
  return p;
}

} // namespace detail

/// Probability the coder's model assigns to symbol k (0 outside the alphabet).
inline double laplace_bin_probability(const LaplaceModel& m, int k, int bound = kAlphabetBound) {
  if (k < -bound || k > bound)
    return 0.0;
  return detail::laplace_bin_masses(m, bound)[k + bound];
}

/**
 * Quantised cumulative distribution over [-bound, bound] summing to kProbTotal,
 * with every symbol at frequency >= 1.
 */
class SymbolTable {
public:
  static SymbolTable laplace(const LaplaceModel& m, int bound = kAlphabetBound) {
    const auto p = detail::laplace_bin_masses(m, bound);
    if (p.size() > kProbTotal)
      throw InvalidArgument("alphabet too large for the probability precision");
    std::vector<std::uint32_t> freq(p.size());
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      freq[i] = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::llround(p[i] * kProbTotal)));
      sum += freq[i];
    }
    // Spread the rounding surplus or deficit over the most probable symbols.
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return freq[a] > freq[b]; });
    std::int64_t diff = static_cast<std::int64_t>(kProbTotal) - sum;
    while (diff != 0) {
      bool moved = false;
      for (auto i : order) {
        if (diff == 0)
          break;
        if (diff > 0) {
          ++freq[i];
          --diff;
          moved = true;
        } else if (freq[i] > 1) {
          --freq[i];
          ++diff;
          moved = true;
        }
      }
      if (!moved)
        throw InvariantViolation("cannot normalise symbol table");
    }
    SymbolTable t;
    t.bound_ = bound;
    t.cum_.resize(freq.size() + 1);
    t.cum_[0] = 0;
    for (std::size_t i = 0; i < freq.size(); ++i)
      t.cum_[i + 1] = t.cum_[i] + freq[i];
    return t;
  }

  int bound() const { return bound_; }
  bool contains(int symbol) const { return symbol >= -bound_ && symbol <= bound_; }
  std::uint32_t low(int symbol) const { return cum_[symbol + bound_]; }
  std::uint32_t freq(int symbol) const { return cum_[symbol + bound_ + 1] - cum_[symbol + bound_]; }
  double probability(int symbol) const { return static_cast<double>(freq(symbol)) / kProbTotal; }

  /// Symbol whose cumulative interval contains `value` (value < kProbTotal).
  int find(std::uint32_t value) const {
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), value);
    return static_cast<int>(it - cum_.begin()) - 1 - bound_;
  }

private:
  int bound_ = 0;
  std::vector<std::uint32_t> cum_;
};

/**
 * Range encoder with 32-bit range, a 33-bit low register and carry
 * propagation through a cached byte plus a run of pending 0xFF bytes.
 * Output is big-endian. The always-zero leading byte is not emitted.
 */
class RangeEncoder {
public:
  void encode(std::uint32_t low, std::uint32_t freq) {
    const std::uint32_t r = range_ >> kProbBits;
    low_ += static_cast<std::uint64_t>(r) * low;
    range_ = r * freq;
    while (range_ < kTop) {
      range_ <<= 8;
      shift_low();
    }
  }

  void encode(const SymbolTable& table, int symbol) {
    if (!table.contains(symbol))
      throw InvalidArgument("symbol " + std::to_string(symbol) + " outside the coder alphabet");
    encode(table.low(symbol), table.freq(symbol));
  }

  std::vector<std::uint8_t> finish() {
    for (int i = 0; i < 5; ++i)
      shift_low();
    return std::move(out_);
  }

private:
  static constexpr std::uint32_t kTop = 1u << 24;

  void shift_low() {
    if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
      const auto carry = static_cast<std::uint8_t>(low_ >> 32);
      std::uint8_t pending = cache_;
      do {
        emit(static_cast<std::uint8_t>(pending + carry));
        pending = 0xFF;
      } while (--cache_size_ != 0);
      cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ & 0x00FFFFFFu) << 8;
  }

  void emit(std::uint8_t byte) {
    if (skip_first_) {
      skip_first_ = false;
      return;
    }
    out_.push_back(byte);
  }

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  bool skip_first_ = true;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
    for (int i = 0; i < 4; ++i)
      code_ = (code_ << 8) | next();
  }

  int decode(const SymbolTable& table) {
    const std::uint32_t r = range_ >> kProbBits;
    const std::uint32_t value = code_ / r;
    if (value >= kProbTotal)
      throw FormatError("corrupt range-coder payload");
    const int symbol = table.find(value);
    code_ -= r * table.low(symbol);
    range_ = r * table.freq(symbol);
    while (range_ < kTop) {
      code_ = (code_ << 8) | next();
      range_ <<= 8;
    }
    return symbol;
  }

  std::size_t bytes_consumed() const { return pos_; }

private:
  static constexpr std::uint32_t kTop = 1u << 24;

  std::uint8_t next() {
    if (pos_ >= bytes_.size())
      throw FormatError("truncated range-coder payload");
    return bytes_[pos_++];
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

namespace detail {

class TableCache {
public:
  explicit TableCache(int bound) : bound_(bound) {}
  const SymbolTable& get(const LaplaceModel& m) {
    auto it = tables_.find(m);
    if (it == tables_.end())
      it = tables_.emplace(m, SymbolTable::laplace(m, bound_)).first;
    return it->second;
  }

private:
  int bound_;
  std::map<LaplaceModel, SymbolTable> tables_;
};

} // namespace detail

/// Codes symbols[i] under models[i]. An empty sequence yields an empty payload.
inline std::vector<std::uint8_t> encode_symbols(std::span<const int> symbols, std::span<const LaplaceModel> models,
                                                int bound = kAlphabetBound) {
  if (symbols.size() != models.size())
    throw InvalidArgument("one model per symbol required");
  if (symbols.empty())
    return {};
  detail::TableCache cache(bound);
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i)
    enc.encode(cache.get(models[i]), symbols[i]);
  return enc.finish();
}

inline std::vector<int> decode_symbols(std::span<const std::uint8_t> bytes, std::size_t count,
                                       std::span<const LaplaceModel> models, int bound = kAlphabetBound) {
  if (models.size() != count)
    throw InvalidArgument("one model per symbol required");
  std::vector<int> out;
  if (count == 0)
    return out;
  out.reserve(count);
  detail::TableCache cache(bound);
  RangeDecoder dec(bytes);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(dec.decode(cache.get(models[i])));
  return out;
}

/// Sum of -log2 p over the sequence using the real-valued model probabilities.
inline double ideal_code_length_bits(std::span<const int> symbols, std::span<const LaplaceModel> models,
                                     int bound = kAlphabetBound) {
  std::map<LaplaceModel, std::vector<double>> masses;
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    auto it = masses.find(models[i]);
    if (it == masses.end())
      it = masses.emplace(models[i], detail::laplace_bin_masses(models[i], bound)).first;
    bits -= std::log2(it->second.at(symbols[i] + bound));
  }
  return bits;
}

// Band scales travel as 8-bit codes on a log2 grid: b = 2^(code/16 - 6).
inline constexpr double kScaleLog2Min = -6.0;
inline constexpr double kScaleCodesPerOctave = 16.0;

inline std::uint8_t encode_scale(double b) {
  const double code = std::round((std::log2(std::max(b, 1e-30)) - kScaleLog2Min) * kScaleCodesPerOctave);
  return static_cast<std::uint8_t>(std::clamp(code, 0.0, 255.0));
}

inline double decode_scale(std::uint8_t code) {
  return std::exp2(code / kScaleCodesPerOctave + kScaleLog2Min);
}

} // namespace rdok
