#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rdok/codec.hpp"
#include "rdok/errors.hpp"
#include "rdok/image_io.hpp"
#include "rdok/metrics.hpp"
#include "rdok/partition.hpp"

namespace rdok {

enum class InitMode { Static, VarianceAdaptive };

inline std::string_view to_string(InitMode m) { return m == InitMode::Static ? "static" : "var"; }

/// Upper bound on codec evaluations per 64-block and pass.
inline constexpr std::size_t kMaxCandidatesPerBlock = 7;

struct RdoConfig {
  InitMode init = InitMode::VarianceAdaptive;
  int passes = 1;
  double lambda_e = 0.25;
  VarianceThresholds thresholds{};
  CodecConfig codec{};

  /// Passes = 0 (use the variance mask as is) only makes sense with variance initialisation.
  void validate() const {
    if (passes < 0 || passes > 2)
      throw InvalidArgument("passes must be 0, 1 or 2");
    if (passes == 0 && init != InitMode::VarianceAdaptive)
      throw InvalidArgument("passes=0 requires variance-adaptive initialisation");
    check_lambda(lambda_e, "lambda_e");
    thresholds.validate();
    codec.validate();
  }

  static RdoConfig from_preset(const QualityPreset& p, InitMode init, int passes) {
    RdoConfig cfg;
    cfg.init = init;
    cfg.passes = passes;
    cfg.lambda_e = p.lambda_e;
    cfg.codec.quant_step = p.quant_step;
    return cfg;
  }
};

/// Outcome of coding one image with one mask.
struct Evaluation {
  double loss = 0.0;
  double rate_bpp = 0.0;
  double distortion = 0.0;
  Bitstream bitstream;
  ImagePlanes reconstruction;
};

/**
 * One full codec run: encode, decode, and L_RDO = (1 - MS-SSIM) + lambda_e * bpp.
 * MS-SSIM uses ScalePolicy::ReduceToFit so that small images remain scorable.
 */
inline Evaluation evaluate(const ImagePlanes& img, const MaskField& mask, const RdoConfig& cfg,
                           const CodecBackend& backend) {
  Evaluation e;
  e.bitstream = backend.encode_with_mask(img, mask, cfg.codec);
  e.reconstruction = backend.decode(e.bitstream, cfg.codec);
  e.rate_bpp = static_cast<double>(backend.rate_of(e.bitstream)) / static_cast<double>(img.pixel_count());
  e.distortion = ms_ssim_distortion(img, e.reconstruction, ScalePolicy::ReduceToFit);
  e.loss = rdo_loss_from(e.distortion, e.rate_bpp, cfg.lambda_e);
  return e;
}

inline Evaluation evaluate(const ImagePlanes& img, const MaskField& mask, const RdoConfig& cfg) {
  return evaluate(img, mask, cfg, SurrogateCodec{});
}

inline MaskField initialize_mask(const ImagePlanes& img, const RdoConfig& cfg) {
  if (cfg.init == InitMode::Static)
    return MaskField::for_image(img, Level::Coarse);
  return generate_mask(img, cfg.thresholds);
}

/// Coarse, medium and fine uniform patterns, in that order.
inline std::array<BlockPattern, 3> uniform_candidates() {
  return {uniform_pattern(Level::Coarse), uniform_pattern(Level::Medium), uniform_pattern(Level::Fine)};
}

/// The uniform `base` pattern (fine or medium) with one quadrant switched to the other of the two.
inline std::array<BlockPattern, 4> toggle_candidates(Level base) {
  if (base == Level::Coarse)
    throw InvalidArgument("toggles are defined on fine/medium patterns only");
  const auto other = static_cast<std::uint8_t>(base == Level::Fine ? Level::Medium : Level::Fine);
  std::array<BlockPattern, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = uniform_pattern(base);
    out[i][i] = other;
  }
  return out;
}

/**
 * Candidate assignments for one block: the three uniform patterns followed by
 * the four single-quadrant toggles of `toggle_base`, which the search sets to
 * whichever of uniform fine / uniform medium scored better.
 */
inline std::vector<BlockPattern> candidates_for_block(const MaskField& current, std::size_t block,
                                                      Level toggle_base = Level::Medium) {
  if (block >= current.block_count())
    throw InvalidArgument("block index out of range");
  std::vector<BlockPattern> out;
  for (const auto& p : uniform_candidates())
    out.push_back(p);
  for (const auto& p : toggle_candidates(toggle_base))
    out.push_back(p);
  return out;
}

struct RdoResult {
  MaskField mask;
  Bitstream bitstream;
  ImagePlanes reconstruction;
  double loss = 0.0;
  double rate_bpp = 0.0;
  double distortion = 0.0;
  /// Codec runs spent on the search itself; 0 for the very fast mode.
  std::size_t codec_runs = 0;
  /// All codec runs including the one that codes the initial mask.
  std::size_t total_codec_runs = 0;
  /// Loss after initialisation and after each pass.
  std::vector<double> per_pass_losses;
};

namespace detail {

struct Scored {
  BlockPattern pattern;
  std::size_t order;
  Evaluation* eval;
};

/// Lower loss wins; ties go to the coarser pattern, then to the earlier candidate.
inline bool better(const Scored& a, const Scored& b) {
  if (a.eval->loss != b.eval->loss)
    return a.eval->loss < b.eval->loss;
  if (level_sum(a.pattern) != level_sum(b.pattern))
    return level_sum(a.pattern) > level_sum(b.pattern);
  return a.order < b.order;
}

} // namespace detail

/**
 * Block-wise greedy RDO.
 *
 * Each pass visits the 64-blocks in raster order. For every block the
 * candidates are coded with the rest of the mask held fixed and the lowest
 * loss is committed before moving on. The current assignment always competes
 * with its known loss, so the loss never increases.
 */
inline RdoResult optimize(const ImagePlanes& img, const RdoConfig& cfg, const CodecBackend& backend) {
  cfg.validate();
  RdoResult res;
  res.mask = initialize_mask(img, cfg);
  Evaluation current = evaluate(img, res.mask, cfg, backend);
  res.total_codec_runs = 1;
  res.per_pass_losses.push_back(current.loss);

  for (int pass = 0; pass < cfg.passes; ++pass) {
    for (std::size_t b = 0; b < res.mask.block_count(); ++b) {
      const BlockPattern held = res.mask.block(b);
      std::vector<Evaluation> evals;
      evals.reserve(kMaxCandidatesPerBlock);
      std::vector<detail::Scored> scored;

      auto score = [&](const BlockPattern& p) -> Evaluation* {
        if (p == held)
          return &current;
        MaskField trial = res.mask;
        trial.set_block(b, p);
        evals.push_back(evaluate(img, trial, cfg, backend));
        ++res.codec_runs;
        ++res.total_codec_runs;
        return &evals.back();
      };

      std::size_t order = 0;
      for (const auto& p : uniform_candidates())
        scored.push_back({p, order++, score(p)});
      const Level base = scored[2].eval->loss < scored[1].eval->loss ? Level::Fine : Level::Medium;
      for (const auto& p : toggle_candidates(base))
        scored.push_back({p, order++, score(p)});
      bool held_listed = false;
      for (const auto& s : scored)
        held_listed = held_listed || s.pattern == held;
      if (!held_listed)
        scored.push_back({held, order++, &current});

      const auto* best = &scored.front();
      for (const auto& s : scored)
        if (detail::better(s, *best))
          best = &s;

      if (best->eval->loss > current.loss)
        throw InvariantViolation("block commit increased the loss");
      if (best->eval != &current) {
        res.mask.set_block(b, best->pattern);
        current = std::move(*best->eval);
      }
    }
    res.per_pass_losses.push_back(current.loss);
  }

  if (!is_valid(res.mask))
    throw InvariantViolation("search produced an invalid mask");
  res.bitstream = std::move(current.bitstream);
  res.reconstruction = std::move(current.reconstruction);
  res.loss = current.loss;
  res.rate_bpp = current.rate_bpp;
  res.distortion = current.distortion;
  return res;
}

inline RdoResult optimize(const ImagePlanes& img, const RdoConfig& cfg) {
  return optimize(img, cfg, SurrogateCodec{});
}

/// One operating point of a sweep.
struct SweepPreset {
  std::string label;
  double quant_step;
  double lambda_e;
};

inline std::vector<SweepPreset> default_sweep_presets() {
  std::vector<SweepPreset> out;
  for (const auto& p : kQualityPresets)
    out.push_back({std::string(p.name), p.quant_step, p.lambda_e});
  return out;
}

struct SweepEntry {
  SweepPreset preset;
  RdoResult result;
  RdPoint point;
};

inline RdPoint rd_point(const ImagePlanes& img, const RdoResult& r, std::string label) {
  return {std::move(label), r.rate_bpp, ms_ssim(img, r.reconstruction, ScalePolicy::ReduceToFit),
          psnr(img, r.reconstruction)};
}

/// Runs optimize once per preset; entries come back sorted by rate.
inline std::vector<SweepEntry> sweep_detailed(const ImagePlanes& img, const std::vector<SweepPreset>& presets,
                                              const RdoConfig& base, const CodecBackend& backend) {
  if (presets.empty())
    throw InvalidArgument("sweep needs at least one preset");
  std::vector<SweepEntry> out;
  for (const auto& p : presets) {
    RdoConfig cfg = base;
    cfg.codec.quant_step = p.quant_step;
    cfg.lambda_e = p.lambda_e;
    auto r = optimize(img, cfg, backend);
    auto point = rd_point(img, r, p.label);
    out.push_back({p, std::move(r), std::move(point)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.point.rate_bpp < b.point.rate_bpp; });
  return out;
}

inline RdCurve sweep(const ImagePlanes& img, const std::vector<SweepPreset>& presets, const RdoConfig& base,
                     const CodecBackend& backend = SurrogateCodec{}) {
  RdCurve curve;
  for (auto& e : sweep_detailed(img, presets, base, backend))
    curve.points.push_back(std::move(e.point));
  return curve;
}

} // namespace rdok
