#pragma once

// Command-line front end. Exit codes: 0 ok, 1 I/O or corrupt input,
// 2 usage / flag validation, 3 internal invariant failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rdok/rdok.hpp"

namespace rdok::cli {

enum ExitCode : int { kOk = 0, kIoError = 1, kUsageError = 2, kInvariantError = 3 };

inline constexpr std::string_view kReportHeader = "preset,init,passes,rate_bpp,ms_ssim,psnr,loss,codec_runs";

struct ModeFlags {
  std::string init = "var";
  int passes = 1;
  double th1 = VarianceThresholds{}.th1;
  double th2 = VarianceThresholds{}.th2;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--init", init, "RDO initialisation")->check(CLI::IsMember({"static", "var"}));
    cmd->add_option("--passes", passes, "RDO passes (0 = very fast, 1 = fast, 2 = full)")->check(CLI::Range(0, 2));
    cmd->add_option("--th1", th1, "variance split threshold for 64-blocks");
    cmd->add_option("--th2", th2, "variance split threshold for 32-blocks");
  }

  RdoConfig config() const {
    RdoConfig cfg;
    cfg.init = init == "static" ? InitMode::Static : InitMode::VarianceAdaptive;
    cfg.passes = passes;
    cfg.thresholds = {th1, th2};
    return cfg;
  }
};

namespace detail {

inline std::string fmt(double v, int digits = 6) {
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline void append_report(const std::string& path, const std::string& row) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out)
    throw IoError("cannot open report '" + path + "'");
  if (fresh)
    out << kReportHeader << '\n';
  out << row << '\n';
  if (!out)
    throw IoError("error while writing report '" + path + "'");
}

inline bool looks_like_stream(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 4 && std::equal(kMagic.begin(), kMagic.end(), bytes.begin());
}

/// Level colours: fine red, medium yellow, coarse green.
inline std::array<double, 3> level_colour(std::uint8_t level) {
  switch (level) {
  case 1: return {1.0, 0.0, 0.0};
  case 2: return {1.0, 1.0, 0.0};
  default: return {0.0, 1.0, 0.0};
  }
}

} // namespace detail

/// Blends the level colours at 50% over the image and outlines every cell in its colour.
inline ImagePlanes render_mask_overlay(const ImagePlanes& img, const MaskField& mask) {
  ImagePlanes out = img;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const auto colour = detail::level_colour(mask.cell(x / kCellSize, y / kCellSize));
      const bool border = x % kCellSize == 0 || y % kCellSize == 0 || x + 1 == img.width || y + 1 == img.height;
      for (int c = 0; c < 3; ++c)
        out.at(c, x, y) = border ? colour[c] : 0.5 * img.at(c, x, y) + 0.5 * colour[c];
    }
  out.replicate_padding();
  return out;
}

struct SelftestOptions {
  bool corrupt_band_scales = false;
};

/// Returns the name of the first failing check, or an empty string.
inline std::string run_selftest(const SelftestOptions& opt, std::ostream& log) {
  auto report = [&](const char* name, bool ok) {
    log << (ok ? "ok   " : "FAIL ") << name << '\n';
    return ok;
  };

  // Deterministic textured test image.
  std::uint32_t state = 12345u;
  auto next = [&] {
    state = state * 1664525u + 1013904223u;
    return static_cast<double>(state >> 8) / 16777216.0;
  };
  const ImagePlanes textured = make_image(128, 128, [&](int, std::size_t x, std::size_t y) {
    return x < 64 ? 0.3 + 0.002 * y : next();
  });

  {
    CodecConfig cfg;
    const MaskField mask = generate_mask(textured);
    const Analysis a = analyze(textured, mask, cfg);
    Bitstream bs = SurrogateCodec::encode_analysis(textured, mask, cfg, a);
    if (opt.corrupt_band_scales)
      for (std::size_t i = 0; i < kScaleTableSize; ++i)
        bs.bytes[kHeaderBytes - kScaleTableSize + i] ^= 0x5A;
    bool ok = true;
    try {
      const auto decoded = SurrogateCodec::decode_stream(bs, cfg);
      for (std::size_t u = 0; ok && u < a.units.size(); ++u)
        ok = decoded.units[u].q == a.units[u].q;
    } catch (const Error&) {
      ok = false;
    }
    if (!report("entropy", ok))
      return "entropy";
  }
  {
    std::uint32_t s = 7u;
    bool ok = true;
    for (int trial = 0; trial < 200 && ok; ++trial) {
      MaskField m(3, 2);
      for (std::size_t b = 0; b < m.block_count(); ++b) {
        s = s * 1664525u + 1013904223u;
        const unsigned pick = s >> 27;
        if (pick % 3 == 0)
          continue;
        BlockPattern p;
        for (std::size_t i = 0; i < 4; ++i)
          p[i] = ((pick >> i) & 1u) ? 1 : 2;
        m.set_block(b, p);
      }
      ok = deserialize_mask(serialize_mask(m), 3, 2) == m;
    }
    if (!report("mask-roundtrip", ok))
      return "mask-roundtrip";
  }
  {
    double worst = 0.0;
    DctBlock blk;
    for (std::size_t i = 0; i < blk.size(); ++i)
      blk[i] = next();
    const auto back = dct8x8_inverse(dct8x8_forward(blk));
    for (std::size_t i = 0; i < blk.size(); ++i)
      worst = std::max(worst, std::abs(back[i] - blk[i]));
    if (!report("dct-inversion", worst < 1e-12))
      return "dct-inversion";
  }
  {
    const ImagePlanes flat(128, 128, 0.5);
    bool ok = true;
    for (auto init : {InitMode::Static, InitMode::VarianceAdaptive})
      for (int passes = 0; passes <= 2; ++passes) {
        if (passes == 0 && init == InitMode::Static)
          continue;
        RdoConfig cfg = RdoConfig::from_preset(quality_preset("Q3"), init, passes);
        ok = ok && optimize(flat, cfg).mask == MaskField::for_image(flat, Level::Coarse);
      }
    if (!report("flat-optimality", ok))
      return "flat-optimality";
  }
  return {};
}

/// Parses argv and runs one subcommand.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rate-distortion-optimised multi-granularity image coder"};
  app.require_subcommand(1);

  // encode
  std::string enc_in, enc_out, enc_quality = "Q3", enc_report;
  double enc_lambda = 0.0, enc_step = 0.0;
  ModeFlags enc_mode;
  auto* enc = app.add_subcommand("encode", "RDO-encode a PPM image into an .rdok stream");
  enc->add_option("input", enc_in, "input PPM")->required();
  enc->add_option("output", enc_out, "output .rdok")->required();
  enc->add_option("--quality", enc_quality, "quality preset")->check(CLI::IsMember({"Q1", "Q2", "Q3", "Q4"}));
  enc->add_option("--lambda-e", enc_lambda, "override the preset's lambda_e");
  enc->add_option("--quant-step", enc_step, "override the preset's quantiser step");
  enc->add_option("--report", enc_report, "append a CSV summary row to this file");
  enc_mode.add_to(enc);

  // decode
  std::string dec_in, dec_out, dec_ref;
  auto* dec = app.add_subcommand("decode", "decode an .rdok stream to PPM");
  dec->add_option("input", dec_in, "input .rdok")->required();
  dec->add_option("output", dec_out, "output PPM")->required();
  dec->add_option("--reference", dec_ref, "original PPM; prints distortion against it");

  // mask
  std::string mask_in, mask_out;
  ModeFlags mask_mode;
  auto* msk = app.add_subcommand("mask", "render the coding mask of a PPM (variance criterion) or .rdok stream");
  msk->add_option("input", mask_in, "input PPM or .rdok")->required();
  msk->add_option("output", mask_out, "overlay PPM")->required();
  msk->add_option("--th1", mask_mode.th1, "variance split threshold for 64-blocks");
  msk->add_option("--th2", mask_mode.th2, "variance split threshold for 32-blocks");

  // sweep
  std::string sw_in, sw_out;
  ModeFlags sw_mode;
  auto* sw = app.add_subcommand("sweep", "run the four quality presets and write an RD curve CSV");
  sw->add_option("input", sw_in, "input PPM")->required();
  sw->add_option("output", sw_out, "curve CSV")->required();
  sw_mode.add_to(sw);

  // bdrate
  std::string bd_anchor, bd_test, bd_axis = "msssim";
  auto* bd = app.add_subcommand("bdrate", "Bjontegaard delta rate between two curve CSVs");
  bd->add_option("anchor", bd_anchor, "anchor curve CSV")->required();
  bd->add_option("test", bd_test, "test curve CSV")->required();
  bd->add_option("--axis", bd_axis, "quality axis")->check(CLI::IsMember({"msssim", "psnr"}));

  // selftest
  std::string st_fault;
  auto* st = app.add_subcommand("selftest", "run the embedded invariant checks");
  st->add_option("--inject-fault", st_fault, "debug: corrupt a component before checking")
      ->check(CLI::IsMember({"band-scale"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*enc) {
      const auto& preset = quality_preset(enc_quality);
      RdoConfig cfg = enc_mode.config();
      cfg.lambda_e = enc->count("--lambda-e") ? enc_lambda : preset.lambda_e;
      cfg.codec.quant_step = enc->count("--quant-step") ? enc_step : preset.quant_step;
      cfg.validate();
      const ImagePlanes img = load_image(enc_in);
      const RdoResult r = optimize(img, cfg);
      rdok::detail::write_file(enc_out, r.bitstream.bytes);
      const double q_ms = ms_ssim(img, r.reconstruction, ScalePolicy::ReduceToFit);
      const double q_psnr = psnr(img, r.reconstruction);
      char mse_buf[64];
      std::snprintf(mse_buf, sizeof mse_buf, "%.17g", mse(img, r.reconstruction));
      out << "rate_bpp   " << detail::fmt(r.rate_bpp) << '\n'
          << "psnr_db    " << detail::fmt(q_psnr, 4) << '\n'
          << "ms_ssim    " << detail::fmt(q_ms) << '\n'
          << "mse        " << mse_buf << '\n'
          << "loss       " << detail::fmt(r.loss) << '\n'
          << "codec_runs " << r.codec_runs << " (search), " << r.total_codec_runs << " total\n";
      if (!enc_report.empty())
        detail::append_report(enc_report, enc_quality + ',' + std::string(to_string(cfg.init)) + ',' +
                                              std::to_string(cfg.passes) + ',' + detail::fmt(r.rate_bpp) + ',' +
                                              detail::fmt(q_ms) + ',' + detail::fmt(q_psnr, 4) + ',' +
                                              detail::fmt(r.loss) + ',' + std::to_string(r.codec_runs));
      return kOk;
    }
    if (*dec) {
      const Bitstream bs{rdok::detail::read_file(dec_in)};
      const ImagePlanes img = SurrogateCodec{}.decode(bs, CodecConfig{});
      save_image(img, dec_out);
      out << "decoded " << img.width << "x" << img.height << ", " << bs.bit_count() << " bits\n";
      if (!dec_ref.empty()) {
        const ImagePlanes ref = load_image(dec_ref);
        char mse_buf[64];
        std::snprintf(mse_buf, sizeof mse_buf, "%.17g", mse(ref, img));
        out << "mse        " << mse_buf << '\n' << "psnr_db    " << detail::fmt(psnr(ref, img), 4) << '\n';
      }
      return kOk;
    }
    if (*msk) {
      VarianceThresholds th{mask_mode.th1, mask_mode.th2};
      th.validate();
      const auto bytes = rdok::detail::read_file(mask_in);
      ImagePlanes background;
      MaskField mask;
      if (detail::looks_like_stream(bytes)) {
        auto decoded = SurrogateCodec::decode_stream(Bitstream{bytes}, CodecConfig{});
        background = std::move(decoded.image);
        mask = std::move(decoded.mask);
      } else {
        background = decode_ppm(bytes);
        mask = generate_mask(background, th);
      }
      save_image(render_mask_overlay(background, mask), mask_out);
      out << "cells: fine " << mask.count(Level::Fine) << ", medium " << mask.count(Level::Medium) << ", coarse "
          << mask.count(Level::Coarse) << '\n';
      return kOk;
    }
    if (*sw) {
      const RdoConfig base = sw_mode.config();
      base.validate();
      const ImagePlanes img = load_image(sw_in);
      const RdCurve curve = sweep(img, default_sweep_presets(), base);
      save_curve(curve, sw_out);
      out << curve_to_csv(curve);
      return kOk;
    }
    if (*bd) {
      const RdCurve anchor = load_curve(bd_anchor);
      const RdCurve test = load_curve(bd_test);
      const auto axis = bd_axis == "psnr" ? QualityAxis::Psnr : QualityAxis::MsSsimDb;
      const auto r = bd_rate(anchor, test, axis);
      char buf[128];
      std::snprintf(buf, sizeof buf, "BD-rate %+.2f%% over %s [%.4f, %.4f] dB\n", r.percent,
                    axis == QualityAxis::Psnr ? "PSNR" : "MS-SSIM-dB", r.quality_lo, r.quality_hi);
      out << buf;
      return kOk;
    }
    if (*st) {
      const std::string failed = run_selftest({st_fault == "band-scale"}, out);
      if (!failed.empty()) {
        err << "selftest failed: " << failed << " check\n";
        return kInvariantError;
      }
      out << "all checks passed\n";
      return kOk;
    }
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const InvariantViolation& e) {
    err << "internal error: " << e.what() << '\n';
    return kInvariantError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kUsageError;
}

} // namespace rdok::cli
