#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>

namespace rdok {

inline constexpr std::size_t kDctSize = 8;

using DctBlock = std::array<double, kDctSize * kDctSize>;

namespace detail {

/// Orthonormal DCT-II basis, basis[k][n].
inline const std::array<std::array<double, kDctSize>, kDctSize>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, kDctSize>, kDctSize> m{};
    for (std::size_t k = 0; k < kDctSize; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / kDctSize) : std::sqrt(2.0 / kDctSize);
      for (std::size_t n = 0; n < kDctSize; ++n)
        m[k][n] = scale * std::cos(std::numbers::pi * (2.0 * n + 1.0) * k / (2.0 * kDctSize));
    }
    return m;
  }();
  return basis;
}

} // namespace detail

// Both directions are separable (rows, then columns) with a fixed summation order.

/// 2-D forward DCT of a row-major 8x8 block; output index is v*8+u.
inline DctBlock dct8x8_forward(const DctBlock& in) {
  const auto& c = detail::dct_basis();
  DctBlock tmp{}, out{};
  for (std::size_t y = 0; y < kDctSize; ++y)
    for (std::size_t u = 0; u < kDctSize; ++u) {
      double s = 0.0;
      for (std::size_t x = 0; x < kDctSize; ++x)
        s += c[u][x] * in[y * kDctSize + x];
      tmp[y * kDctSize + u] = s;
    }
  for (std::size_t v = 0; v < kDctSize; ++v)
    for (std::size_t u = 0; u < kDctSize; ++u) {
      double s = 0.0;
      for (std::size_t y = 0; y < kDctSize; ++y)
        s += c[v][y] * tmp[y * kDctSize + u];
      out[v * kDctSize + u] = s;
    }
  return out;
}

inline DctBlock dct8x8_inverse(const DctBlock& in) {
  const auto& c = detail::dct_basis();
  DctBlock tmp{}, out{};
  for (std::size_t v = 0; v < kDctSize; ++v)
    for (std::size_t x = 0; x < kDctSize; ++x) {
      double s = 0.0;
      for (std::size_t u = 0; u < kDctSize; ++u)
        s += c[u][x] * in[v * kDctSize + u];
      tmp[v * kDctSize + x] = s;
    }
  for (std::size_t y = 0; y < kDctSize; ++y)
    for (std::size_t x = 0; x < kDctSize; ++x) {
      double s = 0.0;
      for (std::size_t v = 0; v < kDctSize; ++v)
        s += c[v][y] * tmp[v * kDctSize + x];
      out[y * kDctSize + x] = s;
    }
  return out;
}

} // namespace rdok
