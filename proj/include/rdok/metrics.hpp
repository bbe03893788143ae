#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "rdok/errors.hpp"
#include "rdok/image_io.hpp"

namespace rdok {

namespace detail {

inline void check_same_size(const ImagePlanes& x, const ImagePlanes& y) {
  if (x.width != y.width || x.height != y.height)
    throw InvalidArgument("image dimensions differ (" + std::to_string(x.width) + "x" + std::to_string(x.height) +
                          " vs " + std::to_string(y.width) + "x" + std::to_string(y.height) + ")");
}

/// Cropped width x height copy of one channel.
inline std::vector<double> cropped_plane(const ImagePlanes& img, int c) {
  std::vector<double> out(img.width * img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    std::copy_n(img.planes[c].begin() + y * img.padded_width, img.width, out.begin() + y * img.width);
  return out;
}

} // namespace detail

/// Mean squared error over the cropped region, averaged over all samples of all channels.
inline double mse(const ImagePlanes& x, const ImagePlanes& y) {
  detail::check_same_size(x, y);
  double sum = 0.0;
  for (int c = 0; c < 3; ++c)
    for (std::size_t r = 0; r < x.height; ++r)
      for (std::size_t col = 0; col < x.width; ++col) {
        const double d = x.at(c, col, r) - y.at(c, col, r);
        sum += d * d;
      }
  return sum / (3.0 * static_cast<double>(x.pixel_count()));
}

/// PSNR for unit peak. Identical images report +infinity ("lossless").
inline double psnr(const ImagePlanes& x, const ImagePlanes& y) {
  const double e = mse(x, y);
  if (e == 0.0)
    return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / e);
}

inline bool is_lossless(double psnr_db) { return std::isinf(psnr_db) && psnr_db > 0; }

// ---------------------------------------------------------------------------
// MS-SSIM

inline constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Smallest side for which all five scales keep at least one full window.
inline constexpr std::size_t kMsSsimMinSide = kSsimWindow << 4;

enum class ScalePolicy {
  /// Standard five scales; smaller images are rejected.
  Strict,
  /// Drop the coarsest scales that no longer fit a window and renormalise the remaining weights.
  ReduceToFit,
};

namespace detail {

inline const std::array<double, kSsimWindow>& gaussian_window() {
  static const auto w = [] {
    std::array<double, kSsimWindow> g{};
    double sum = 0.0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
      const double d = static_cast<double>(i) - static_cast<double>(kSsimWindow / 2);
      g[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
      sum += g[i];
    }
    for (auto& v : g)
      v /= sum;
    return g;
  }();
  return w;
}

struct SsimTerms {
  double ssim;
  double cs;
};

/// Mean SSIM and contrast-structure terms with a 'valid' Gaussian window.
inline SsimTerms ssim_terms(const std::vector<double>& x, const std::vector<double>& y, std::size_t w,
                            std::size_t h) {
  const auto& g = gaussian_window();
  const std::size_t ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;

  // Separable filtering of x, y, x^2, y^2 and xy; rows first, then columns.
  std::array<std::vector<double>, 5> rows;
  for (auto& r : rows)
    r.assign(ow * h, 0.0);
  std::array<std::vector<double>, 5> src;
  src[0] = x;
  src[1] = y;
  for (auto* v : {&src[2], &src[3], &src[4]})
    v->resize(w * h);
  for (std::size_t i = 0; i < w * h; ++i) {
    src[2][i] = x[i] * x[i];
    src[3][i] = y[i] * y[i];
    src[4][i] = x[i] * y[i];
  }
  for (int j = 0; j < 5; ++j)
    for (std::size_t r = 0; r < h; ++r) {
      double* dst = &rows[j][r * ow];
      for (std::size_t k = 0; k < kSsimWindow; ++k) {
        const double gk = g[k];
        const double* s = &src[j][r * w + k];
        for (std::size_t c = 0; c < ow; ++c)
          dst[c] += gk * s[c];
      }
    }

  std::array<std::vector<double>, 5> acc;
  for (auto& a : acc)
    a.resize(ow);
  double ssim_sum = 0.0, cs_sum = 0.0;
  for (std::size_t r = 0; r < oh; ++r) {
    for (int j = 0; j < 5; ++j) {
      double* a = acc[j].data();
      std::fill_n(a, ow, 0.0);
      for (std::size_t k = 0; k < kSsimWindow; ++k) {
        const double gk = g[k];
        const double* s = &rows[j][(r + k) * ow];
        for (std::size_t c = 0; c < ow; ++c)
          a[c] += gk * s[c];
      }
    }
    for (std::size_t c = 0; c < ow; ++c) {
      const double mu1 = acc[0][c], mu2 = acc[1][c];
      const double s11 = acc[2][c] - mu1 * mu1, s22 = acc[3][c] - mu2 * mu2, s12 = acc[4][c] - mu1 * mu2;
      const double cs = (2.0 * s12 + kSsimC2) / (s11 + s22 + kSsimC2);
      cs_sum += cs;
      ssim_sum += (2.0 * mu1 * mu2 + kSsimC1) / (mu1 * mu1 + mu2 * mu2 + kSsimC1) * cs;
    }
  }
  const double n = static_cast<double>(ow * oh);
  return {ssim_sum / n, cs_sum / n};
}

/// 2x2 mean; an odd trailing row or column is dropped.
inline std::vector<double> halve(const std::vector<double>& v, std::size_t w, std::size_t h) {
  const std::size_t nw = w / 2, nh = h / 2;
  std::vector<double> out(nw * nh);
  for (std::size_t r = 0; r < nh; ++r)
    for (std::size_t c = 0; c < nw; ++c)
      out[r * nw + c] = 0.25 * (v[2 * r * w + 2 * c] + v[2 * r * w + 2 * c + 1] + v[(2 * r + 1) * w + 2 * c] +
                                v[(2 * r + 1) * w + 2 * c + 1]);
  return out;
}

inline std::size_t ms_ssim_scales(std::size_t w, std::size_t h, ScalePolicy policy) {
  const std::size_t side = std::min(w, h);
  if (policy == ScalePolicy::Strict) {
    if (side < kMsSsimMinSide)
      throw InvalidArgument("MS-SSIM needs images of at least " + std::to_string(kMsSsimMinSide) + "x" +
                            std::to_string(kMsSsimMinSide) + " pixels");
    return kMsSsimWeights.size();
  }
  std::size_t scales = 0;
  while (scales < kMsSsimWeights.size() && (side >> scales) >= kSsimWindow)
    ++scales;
  if (scales == 0)
    throw InvalidArgument("MS-SSIM needs images of at least " + std::to_string(kSsimWindow) + " pixels per side");
  return scales;
}

} // namespace detail

/**
 * Multi-scale SSIM over the cropped region, computed per channel and averaged.
 *
 * 11-tap Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, 2x2 mean
 * downsampling between scales. Negative per-scale terms are clipped to zero
 * before exponentiation so the result stays in [0,1].
 */
inline double ms_ssim(const ImagePlanes& x, const ImagePlanes& y, ScalePolicy policy = ScalePolicy::Strict) {
  detail::check_same_size(x, y);
  const std::size_t scales = detail::ms_ssim_scales(x.width, x.height, policy);
  // The standard weights are used as published; only a truncated set is renormalised.
  double weight_sum = 1.0;
  if (scales < kMsSsimWeights.size())
    weight_sum = std::accumulate(kMsSsimWeights.begin(), kMsSsimWeights.begin() + scales, 0.0);

  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    auto a = detail::cropped_plane(x, c);
    auto b = detail::cropped_plane(y, c);
    std::size_t w = x.width, h = x.height;
    double value = 1.0;
    for (std::size_t s = 0; s < scales; ++s) {
      const auto t = detail::ssim_terms(a, b, w, h);
      const double term = s + 1 == scales ? t.ssim : t.cs;
      value *= std::pow(std::max(term, 0.0), kMsSsimWeights[s] / weight_sum);
      if (s + 1 < scales) {
        a = detail::halve(a, w, h);
        b = detail::halve(b, w, h);
        w /= 2;
        h /= 2;
      }
    }
    total += value;
  }
  return total / 3.0;
}

/// 1 - MS-SSIM.
inline double ms_ssim_distortion(const ImagePlanes& x, const ImagePlanes& y, ScalePolicy policy = ScalePolicy::Strict) {
  return 1.0 - ms_ssim(x, y, policy);
}

/// MS-SSIM on a logarithmic axis: -10 log10(1 - MS-SSIM).
inline double ms_ssim_db(double ms_ssim_value) {
  return -10.0 * std::log10(1.0 - ms_ssim_value);
}

// ---------------------------------------------------------------------------
// Losses

inline void check_lambda(double lambda, const char* name) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw InvalidArgument(std::string(name) + " must be positive");
}

/// L = D_MS-SSIM + lambda_e * r, from an already computed distortion.
inline double rdo_loss_from(double distortion, double rate_bpp, double lambda_e) {
  check_lambda(lambda_e, "lambda_e");
  return distortion + lambda_e * rate_bpp;
}

inline double rdo_loss(const ImagePlanes& x, const ImagePlanes& x_hat, double rate_bpp, double lambda_e,
                       ScalePolicy policy = ScalePolicy::Strict) {
  check_lambda(lambda_e, "lambda_e");
  return rdo_loss_from(ms_ssim_distortion(x, x_hat, policy), rate_bpp, lambda_e);
}

/// L = D_MSE + 0.1 * D_MS-SSIM + lambda_t * r.
inline double training_loss_from(double mse_value, double ms_ssim_distortion_value, double rate_bpp,
                                 double lambda_t) {
  check_lambda(lambda_t, "lambda_t");
  return mse_value + 0.1 * ms_ssim_distortion_value + lambda_t * rate_bpp;
}

inline double training_loss(const ImagePlanes& x, const ImagePlanes& x_hat, double rate_bpp, double lambda_t,
                            ScalePolicy policy = ScalePolicy::Strict) {
  check_lambda(lambda_t, "lambda_t");
  return training_loss_from(mse(x, x_hat), ms_ssim_distortion(x, x_hat, policy), rate_bpp, lambda_t);
}

/// Four-point operating curve. Q1 is the coarsest, Q4 the finest.
struct QualityPreset {
  std::string_view name;
  double quant_step;
  double lambda_e;
  double lambda_t;
};

inline constexpr std::array<QualityPreset, 4> kQualityPresets = {{
    {"Q1", 0.08, 0.5, 0.08},
    {"Q2", 0.04, 0.5, 0.04},
    {"Q3", 0.02, 0.25, 0.02},
    {"Q4", 0.01, 0.125, 0.01},
}};

inline const QualityPreset& quality_preset(std::string_view name) {
  for (const auto& p : kQualityPresets)
    if (p.name == name)
      return p;
  throw InvalidArgument("unknown quality preset '" + std::string(name) + "' (expected Q1..Q4)");
}

// ---------------------------------------------------------------------------
// RD curves and Bjontegaard delta rate

struct RdPoint {
  std::string label;
  double rate_bpp = 0.0;
  double ms_ssim = 0.0;
  double psnr_db = 0.0;

  double distortion() const { return 1.0 - ms_ssim; }
};

enum class QualityAxis { MsSsimDb, Psnr };

inline double quality_db(const RdPoint& p, QualityAxis axis) {
  return axis == QualityAxis::Psnr ? p.psnr_db : ms_ssim_db(p.ms_ssim);
}

struct RdCurve {
  std::vector<RdPoint> points;

  void sort_by_rate() {
    std::stable_sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.rate_bpp < b.rate_bpp; });
  }
};

inline constexpr std::string_view kCurveCsvHeader = "label,rate_bpp,ms_ssim,psnr_db";

inline std::string format_number(double v) {
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string curve_to_csv(const RdCurve& curve) {
  std::string out(kCurveCsvHeader);
  out += '\n';
  for (const auto& p : curve.points) {
    if (p.label.find_first_of(",\n") != std::string::npos)
      throw InvalidArgument("curve labels must not contain ',' or newlines");
    out += p.label + ',' + format_number(p.rate_bpp) + ',' + format_number(p.ms_ssim) + ',' +
           format_number(p.psnr_db) + '\n';
  }
  return out;
}

namespace detail {

inline double parse_number(const std::string& field, std::size_t line) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw FormatError("line " + std::to_string(line) + ": bad number '" + field + "'");
  return v;
}

} // namespace detail

inline RdCurve curve_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw FormatError("empty curve file");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  if (line != kCurveCsvHeader)
    throw FormatError("unexpected curve header '" + line + "'");
  RdCurve curve;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ','))
      fields.push_back(f);
    if (fields.size() != 4)
      throw FormatError("line " + std::to_string(line_no) + ": expected 4 fields");
    curve.points.push_back({fields[0], detail::parse_number(fields[1], line_no), detail::parse_number(fields[2], line_no),
                            detail::parse_number(fields[3], line_no)});
  }
  return curve;
}

inline void save_curve(const RdCurve& curve, const std::string& path) {
  const auto text = curve_to_csv(curve);
  detail::write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

inline RdCurve load_curve(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return curve_from_csv(std::string(bytes.begin(), bytes.end()));
}

namespace detail {

/// Least-squares cubic in a centred, scaled variable; coefficients are in powers of (q - centre) / scale.
struct CubicFit {
  std::array<double, 4> coeff{};
  double centre = 0.0;
  double scale = 1.0;

  /// Integral of the cubic over [lo, hi] in the original variable.
  double integral(double lo, double hi) const {
    auto antiderivative = [&](double q) {
      const double t = (q - centre) / scale;
      double s = 0.0, tp = t;
      for (std::size_t k = 0; k < 4; ++k, tp *= t)
        s += coeff[k] * tp / static_cast<double>(k + 1);
      return s * scale;
    };
    return antiderivative(hi) - antiderivative(lo);
  }
};

/// Householder QR least squares of y ~ sum_k c_k t^k, k < 4.
inline CubicFit fit_cubic(const std::vector<double>& q, const std::vector<double>& y) {
  const std::size_t n = q.size();
  CubicFit fit;
  const auto [mn, mx] = std::minmax_element(q.begin(), q.end());
  fit.centre = 0.5 * (*mn + *mx);
  fit.scale = std::max(0.5 * (*mx - *mn), 1e-12);
  std::vector<std::array<double, 4>> a(n);
  std::vector<double> b = y;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (q[i] - fit.centre) / fit.scale;
    a[i] = {1.0, t, t * t, t * t * t};
  }
  for (std::size_t k = 0; k < 4; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < n; ++i)
      norm += a[i][k] * a[i][k];
    norm = std::sqrt(norm);
    if (norm == 0.0)
      throw InvalidArgument("degenerate curve for cubic fit");
    const double alpha = a[k][k] > 0 ? -norm : norm;
    std::vector<double> v(n, 0.0);
    for (std::size_t i = k; i < n; ++i)
      v[i] = a[i][k];
    v[k] -= alpha;
    double vnorm = 0.0;
    for (std::size_t i = k; i < n; ++i)
      vnorm += v[i] * v[i];
    if (vnorm == 0.0)
      continue;
    for (std::size_t j = k; j < 4; ++j) {
      double d = 0.0;
      for (std::size_t i = k; i < n; ++i)
        d += v[i] * a[i][j];
      d = 2.0 * d / vnorm;
      for (std::size_t i = k; i < n; ++i)
        a[i][j] -= d * v[i];
    }
    double d = 0.0;
    for (std::size_t i = k; i < n; ++i)
      d += v[i] * b[i];
    d = 2.0 * d / vnorm;
    for (std::size_t i = k; i < n; ++i)
      b[i] -= d * v[i];
  }
  for (std::size_t k = 4; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < 4; ++j)
      s -= a[k][j] * fit.coeff[j];
    fit.coeff[k] = s / a[k][k];
  }
  return fit;
}

inline void check_bd_curve(const RdCurve& c, QualityAxis axis, const char* which) {
  if (c.points.size() < 4)
    throw InvalidArgument(std::string(which) + " curve needs at least 4 points");
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const auto& p = c.points[i];
    if (!(p.rate_bpp > 0.0) || !std::isfinite(quality_db(p, axis)))
      throw InvalidArgument(std::string(which) + " curve has a non-positive rate or non-finite quality");
    if (i > 0) {
      const auto& prev = c.points[i - 1];
      if (!(p.rate_bpp > prev.rate_bpp) || !(quality_db(p, axis) > quality_db(prev, axis)))
        throw InvalidArgument(std::string(which) + " curve is not strictly monotone in rate and quality");
    }
  }
}

} // namespace detail

struct BdRateResult {
  double percent = 0.0;
  double quality_lo = 0.0;
  double quality_hi = 0.0;
};

/**
 * Bjontegaard delta rate of `test` against `anchor`.
 *
 * Fits log10(rate) as a cubic in quality for each curve, averages the gap
 * over the overlapping quality interval and returns (10^gap - 1) * 100.
 * Negative means the test curve needs less rate.
 */
inline BdRateResult bd_rate(RdCurve anchor, RdCurve test, QualityAxis axis) {
  anchor.sort_by_rate();
  test.sort_by_rate();
  detail::check_bd_curve(anchor, axis, "anchor");
  detail::check_bd_curve(test, axis, "test");
  auto fit = [&](const RdCurve& c) {
    std::vector<double> q, lr;
    for (const auto& p : c.points) {
      q.push_back(quality_db(p, axis));
      lr.push_back(std::log10(p.rate_bpp));
    }
    return std::make_tuple(detail::fit_cubic(q, lr), q.front(), q.back());
  };
  const auto [fa, alo, ahi] = fit(anchor);
  const auto [ft, tlo, thi] = fit(test);
  BdRateResult r;
  r.quality_lo = std::max(alo, tlo);
  r.quality_hi = std::min(ahi, thi);
  if (!(r.quality_hi > r.quality_lo))
    throw InvalidArgument("quality ranges of the two curves do not overlap");
  const double avg = (ft.integral(r.quality_lo, r.quality_hi) - fa.integral(r.quality_lo, r.quality_hi)) /
                     (r.quality_hi - r.quality_lo);
  r.percent = (std::pow(10.0, avg) - 1.0) * 100.0;
  return r;
}

} // namespace rdok
