// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failing criteria not listed with --expect-fail.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "rdok/rdok.hpp"
#include "support/msssim_pairs.hpp"
#include "support/synthetic.hpp"

#include "oracles/msssim_reference.inc"

using namespace rdok;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string printf_string(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string printf_string(const char* fmt, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

MaskField random_mask(std::mt19937& rng, std::size_t bx, std::size_t by) {
  MaskField m(bx, by);
  for (std::size_t b = 0; b < m.block_count(); ++b) {
    if (rng() % 3 == 0)
      continue;
    BlockPattern p;
    for (auto& v : p)
      v = rng() % 2 ? 1 : 2;
    m.set_block(b, p);
  }
  return m;
}

RdoConfig preset_config(const char* name, InitMode init, int passes) {
  return RdoConfig::from_preset(quality_preset(name), init, passes);
}

// ---------------------------------------------------------------------------

Outcome lossless_roundtrips() {
  const auto t0 = Clock::now();
  std::mt19937 rng(1);
  std::size_t entropy_bad = 0, mask_bad = 0, ppm_bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = rng() % 64;
    std::vector<int> syms(n);
    std::vector<LaplaceModel> models(n);
    for (std::size_t k = 0; k < n; ++k) {
      models[k] = {std::uniform_real_distribution<double>(-3, 3)(rng),
                   std::exp2(std::uniform_real_distribution<double>(-6, 9)(rng))};
      syms[k] = static_cast<int>(rng() % (2 * kAlphabetBound + 1)) - kAlphabetBound;
    }
    entropy_bad += decode_symbols(encode_symbols(syms, models), n, models) != syms;
  }
  for (int i = 0; i < 10000; ++i) {
    const std::size_t bx = 1 + rng() % 8, by = 1 + rng() % 8;
    const auto m = random_mask(rng, bx, by);
    mask_bad += deserialize_mask(serialize_mask(m), bx, by) != m;
  }
  for (int i = 0; i < 50; ++i) {
    const std::size_t w = 1 + rng() % 150, h = 1 + rng() % 150;
    std::vector<std::uint8_t> raster(w * h * 3);
    for (auto& b : raster)
      b = static_cast<std::uint8_t>(rng());
    const auto img = from_rgb8(raster, w, h);
    const std::string path = std::string(RDOK_TEST_TMPDIR) + "/acceptance.ppm";
    save_image(img, path);
    const auto back = load_image(path);
    ppm_bad += to_rgb8(back) != raster || !(back == img);
  }
  const double secs = seconds_since(t0);
  return {entropy_bad + mask_bad + ppm_bad == 0 && secs < 60.0,
          printf_string("entropy 10000 cases, %zu mismatches; masks 10000, %zu; ppm 50, %zu; %.1f s", entropy_bad,
                        mask_bad, ppm_bad, secs)};
}

Outcome entropy_efficiency() {
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> ex(0.5);
  std::vector<int> syms(100000);
  std::map<int, std::size_t> hist;
  for (auto& s : syms) {
    const double v = (rng() & 1 ? 1.0 : -1.0) * ex(rng);
    s = std::clamp(static_cast<int>(std::lround(v)), -kAlphabetBound, kAlphabetBound);
    ++hist[s];
  }
  double entropy = 0.0;
  for (const auto& [k, n] : hist)
    entropy -= static_cast<double>(n) * std::log2(static_cast<double>(n) / syms.size());
  const std::vector<LaplaceModel> models(syms.size(), {0.0, 2.0});
  const auto bytes = encode_symbols(syms, models);
  const double bits = 8.0 * bytes.size();
  const bool exact = decode_symbols(bytes, syms.size(), models) == syms;
  return {exact && bits <= 1.01 * entropy + 32.0,
          printf_string("coded %.0f bits, empirical entropy %.1f bits, ratio %.5f, bound %.1f", bits, entropy,
                        bits / entropy, 1.01 * entropy + 32.0)};
}

Outcome mask_fidelity() {
  const auto img = synth::flat_noise_composite(512, 256, 3);
  const auto m = generate_mask(img);
  std::size_t flat_cells = 0, flat_coarse = 0, noise_cells = 0, noise_fine = 0;
  for (std::size_t cy = 0; cy < m.cells_y(); ++cy)
    for (std::size_t cx = 0; cx < m.cells_x(); ++cx) {
      if (cx * kCellSize < 256) {
        ++flat_cells;
        flat_coarse += m.cell(cx, cy) == 3;
      } else {
        ++noise_cells;
        noise_fine += m.cell(cx, cy) == 1;
      }
    }
  const double fc = static_cast<double>(flat_coarse) / flat_cells, nf = static_cast<double>(noise_fine) / noise_cells;
  return {fc >= 0.95 && nf >= 0.95,
          printf_string("flat cells at level 3: %.1f%% of %zu; noise cells at level 1: %.1f%% of %zu", 100 * fc,
                        flat_cells, 100 * nf, noise_cells)};
}

Outcome flat_optimality() {
  const ImagePlanes flat(128, 128, 0.5);
  const auto cfg = preset_config("Q3", InitMode::Static, 1);
  // The 17 valid patterns of one 64-block: whole-coarse, or any fine/medium mix.
  std::vector<BlockPattern> patterns = {uniform_pattern(Level::Coarse)};
  for (unsigned bits = 0; bits < 16; ++bits)
    patterns.push_back({static_cast<std::uint8_t>(bits & 1 ? 1 : 2), static_cast<std::uint8_t>(bits & 2 ? 1 : 2),
                        static_cast<std::uint8_t>(bits & 4 ? 1 : 2), static_cast<std::uint8_t>(bits & 8 ? 1 : 2)});
  const SurrogateCodec codec;
  double best = std::numeric_limits<double>::infinity(), runner_up = best;
  MaskField best_mask;
  std::size_t enumerated = 0, full_msssim = 0;
  MaskField m(2, 2);
  for (std::size_t a = 0; a < 17; ++a)
    for (std::size_t b = 0; b < 17; ++b)
      for (std::size_t c = 0; c < 17; ++c)
        for (std::size_t d = 0; d < 17; ++d) {
          m.set_block(0, patterns[a]);
          m.set_block(1, patterns[b]);
          m.set_block(2, patterns[c]);
          m.set_block(3, patterns[d]);
          const auto bs = codec.encode_with_mask(flat, m, cfg.codec);
          const auto rec = codec.decode(bs, cfg.codec);
          // An exact reconstruction has MS-SSIM 1; anything else is measured.
          double dist = 0.0;
          if (!(rec == flat)) {
            dist = ms_ssim_distortion(flat, rec, ScalePolicy::ReduceToFit);
            ++full_msssim;
          }
          const double loss = dist + cfg.lambda_e * static_cast<double>(bs.bit_count()) / flat.pixel_count();
          ++enumerated;
          if (loss < best) {
            runner_up = best;
            best = loss;
            best_mask = m;
          } else if (loss < runner_up) {
            runner_up = loss;
          }
        }
  const auto coarse = MaskField::for_image(flat, Level::Coarse);
  bool optimize_ok = true;
  std::string runs;
  for (auto init : {InitMode::Static, InitMode::VarianceAdaptive})
    for (int passes = 0; passes <= 2; ++passes) {
      if (init == InitMode::Static && passes == 0)
        continue;
      const auto r = optimize(flat, preset_config("Q3", init, passes));
      optimize_ok = optimize_ok && r.mask == coarse && r.loss == best;
      runs += printf_string(" %s/%d:%s", std::string(to_string(init)).c_str(), passes, r.mask == coarse ? "3" : "x");
    }
  return {best_mask == coarse && best < runner_up && optimize_ok,
          printf_string("%zu masks enumerated (%zu needed MS-SSIM), minimum %.6f at %s, next best %.6f; optimize%s",
                        enumerated, full_msssim, best, best_mask == coarse ? "uniform level 3" : "another mask",
                        runner_up, runs.c_str())};
}

Outcome pass_monotonicity() {
  double sum_var1 = 0.0, sum_static1 = 0.0;
  std::size_t chain_violations = 0;
  const int suite = 20;
  for (int i = 0; i < suite; ++i) {
    const auto img = synth::scene_image(192, 192, 1000 + i);
    const double l0 = optimize(img, preset_config("Q3", InitMode::VarianceAdaptive, 0)).loss;
    const double l1 = optimize(img, preset_config("Q3", InitMode::VarianceAdaptive, 1)).loss;
    const double l2 = optimize(img, preset_config("Q3", InitMode::VarianceAdaptive, 2)).loss;
    const double s1 = optimize(img, preset_config("Q3", InitMode::Static, 1)).loss;
    chain_violations += !(l2 <= l1 && l1 <= l0);
    sum_var1 += l1;
    sum_static1 += s1;
  }
  const double mv = sum_var1 / suite, ms = sum_static1 / suite;
  return {chain_violations == 0 && mv <= ms,
          printf_string("per-image chain 2<=1<=0 violated on %zu/%d; suite-mean 1-pass loss var %.6f vs static %.6f (%s)",
                        chain_violations, suite, mv, ms, mv <= ms ? "var <= static" : "var > static")};
}

class CountingBackend final : public CodecBackend {
public:
  Bitstream encode_with_mask(const ImagePlanes& img, const MaskField& mask, const CodecConfig& cfg) const override {
    ++encodes;
    return inner.encode_with_mask(img, mask, cfg);
  }
  ImagePlanes decode(const Bitstream& bs, const CodecConfig& cfg) const override { return inner.decode(bs, cfg); }
  SurrogateCodec inner;
  mutable std::size_t encodes = 0;
};

Outcome complexity_accounting() {
  bool ok = true;
  std::size_t cases = 0, worst_per_pass = 0, n64 = 0;
  for (std::uint32_t seed : {2000u, 2001u, 2002u}) {
    const auto img = synth::scene_image(256, 192, seed);
    n64 = img.blocks_x() * img.blocks_y();
    for (auto init : {InitMode::Static, InitMode::VarianceAdaptive})
      for (int passes = 0; passes <= 2; ++passes) {
        if (init == InitMode::Static && passes == 0)
          continue;
        CountingBackend backend;
        const auto r = optimize(img, preset_config("Q2", init, passes), backend);
        const std::size_t search_calls = backend.encodes - 1;
        ok = ok && r.codec_runs == search_calls && r.total_codec_runs == backend.encodes;
        ok = ok && r.codec_runs <= kMaxCandidatesPerBlock * n64 * passes;
        if (passes == 0)
          ok = ok && r.codec_runs == 0;
        else
          worst_per_pass = std::max(worst_per_pass, r.codec_runs / passes);
        ++cases;
      }
  }
  return {ok, printf_string("%zu runs, reported == instrumented in all; max %zu runs per pass vs bound 7*N64 = %zu; "
                            "very-fast mode 0",
                            cases, worst_per_pass, kMaxCandidatesPerBlock * n64)};
}

double lagrange_log_rate(const RdCurve& c, double q) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    double li = 1.0;
    const double qi = ms_ssim_db(c.points[i].ms_ssim);
    for (std::size_t j = 0; j < c.points.size(); ++j)
      if (j != i)
        li *= (q - ms_ssim_db(c.points[j].ms_ssim)) / (qi - ms_ssim_db(c.points[j].ms_ssim));
    s += li * std::log10(c.points[i].rate_bpp);
  }
  return s;
}

/// Composite Simpson over the overlap of the two interpolating cubics.
double oracle_bd_rate(const RdCurve& a, const RdCurve& t) {
  const double lo = std::max(ms_ssim_db(a.points.front().ms_ssim), ms_ssim_db(t.points.front().ms_ssim));
  const double hi = std::min(ms_ssim_db(a.points.back().ms_ssim), ms_ssim_db(t.points.back().ms_ssim));
  const int n = 4000;
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double q = lo + i * h;
    s += ((i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0)) * (lagrange_log_rate(t, q) - lagrange_log_rate(a, q));
  }
  return (std::pow(10.0, s * h / 3.0 / (hi - lo)) - 1.0) * 100.0;
}

Outcome bd_rate_oracle(const RdCurve& anchor) {
  RdCurve doubled = anchor, halved = anchor;
  for (auto& p : doubled.points)
    p.rate_bpp *= 2.0;
  for (auto& p : halved.points)
    p.rate_bpp *= 0.5;
  const double same = bd_rate(anchor, anchor, QualityAxis::MsSsimDb).percent;
  const double up = bd_rate(anchor, doubled, QualityAxis::MsSsimDb).percent;
  const double down = bd_rate(anchor, halved, QualityAxis::MsSsimDb).percent;
  const double up_oracle = oracle_bd_rate(anchor, doubled), down_oracle = oracle_bd_rate(anchor, halved);
  char same_text[32];
  std::snprintf(same_text, sizeof same_text, "%.2f", same);
  const bool ok = (std::string(same_text) == "0.00" || std::string(same_text) == "-0.00") &&
                  std::abs(up - 100.0) <= 0.1 && std::abs(down + 50.0) <= 0.1 && std::abs(up - up_oracle) <= 0.1 &&
                  std::abs(down - down_oracle) <= 0.1;
  return {ok, printf_string("identical %s%%, doubled %+.4f%% (oracle %+.4f%%), halved %+.4f%% (oracle %+.4f%%)",
                            same_text, up, up_oracle, down, down_oracle)};
}

Outcome msssim_conformance() {
  double worst = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < synth::kMsSsimPairs.size(); ++i) {
    const auto p = synth::make_byte_pair(synth::kMsSsimPairs[i]);
    const double v = ms_ssim(from_rgb8(p.x, p.width, p.height), from_rgb8(p.y, p.width, p.height));
    worst = std::max(worst, std::abs(v - kMsSsimReference[i]));
    ++pairs;
  }
  const auto b = synth::make_binary_complement_pair(synth::kBinaryComplementPair);
  const double v = ms_ssim(from_rgb8(b.x, b.width, b.height), from_rgb8(b.y, b.width, b.height));
  worst = std::max(worst, std::abs(v - kMsSsimBinaryComplementReference));
  ++pairs;
  return {worst <= 1e-6, printf_string("%zu pairs vs pytorch_msssim (float64), max abs difference %.3g", pairs, worst)};
}

Outcome neighbour_coupling() {
  const auto img = synth::scene_image(256, 256, 4242);
  MaskField base(4, 4, Level::Medium);
  const auto before = analyze(img, base, {});
  std::size_t flips = 0, witnessed = 0;
  // Flip each cell in turn (medium -> fine) and look at the units right of and below it.
  for (std::size_t cy = 0; cy < base.cells_y(); ++cy)
    for (std::size_t cx = 0; cx < base.cells_x(); ++cx) {
      MaskField m = base;
      m.set_cell(cx, cy, 1);
      const auto after = analyze(img, m, {});
      bool changed = false;
      for (std::size_t u = 0; u < after.units.size(); ++u) {
        const auto& unit = after.units[u].unit;
        const std::size_t ux = unit.x0 / kCellSize, uy = unit.y0 / kCellSize;
        const bool neighbour = (ux == cx + 1 && uy == cy) || (ux == cx && uy == cy + 1);
        if (neighbour && after.units[u].q != before.units[u].q)
          changed = true;
      }
      ++flips;
      witnessed += changed;
    }
  return {witnessed > 0,
          printf_string("%zu of %zu single-cell flips changed a right/bottom neighbour's coefficients", witnessed,
                        flips)};
}

Outcome sweep_sanity(RdCurve& first_curve) {
  bool ok = true;
  std::string detail;
  const std::vector<std::pair<std::string, ImagePlanes>> images = {
      {"fractal-1", synth::fractal_image(256, 192, 1)},
      {"fractal-2", synth::fractal_image(192, 192, 2, 0.65, 0.5)},
      {"scene-3", synth::scene_image(256, 256, 3)},
  };
  for (const auto& [name, img] : images) {
    const auto entries = sweep_detailed(img, default_sweep_presets(), preset_config("Q1", InitMode::VarianceAdaptive, 1),
                                        SurrogateCodec{});
    // Put the entries back in preset order Q1..Q4.
    std::vector<RdPoint> byname(4);
    for (const auto& e : entries)
      byname[e.preset.label[1] - '1'] = e.point;
    bool this_ok = true;
    for (std::size_t i = 1; i < 4; ++i)
      this_ok = this_ok && byname[i].rate_bpp > byname[i - 1].rate_bpp && byname[i].ms_ssim >= byname[i - 1].ms_ssim;
    ok = ok && this_ok;
    detail += printf_string("%s%s bpp %.3f..%.3f ms-ssim %.4f..%.4f", detail.empty() ? "" : "; ", name.c_str(),
                            byname[0].rate_bpp, byname[3].rate_bpp, byname[0].ms_ssim, byname[3].ms_ssim);
    if (!this_ok)
      detail += " (not monotone)";
    if (first_curve.points.empty())
      first_curve.points = byname;
  }
  return {ok, detail};
}

} // namespace

int main(int argc, char** argv) {
  std::set<int> expected_failures;
  for (int i = 1; i < argc; ++i) {
    if (std::strncmp(argv[i], "--expect-fail=", 14) == 0)
      expected_failures.insert(std::atoi(argv[i] + 14));
    else {
      std::fprintf(stderr, "usage: %s [--expect-fail=N]...\n", argv[0]);
      return 2;
    }
  }

  RdCurve sweep_curve;
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"lossless roundtrips", lossless_roundtrips},
      {"entropy efficiency", entropy_efficiency},
      {"mask generation fidelity", mask_fidelity},
      {"flat-image optimality", flat_optimality},
      {"pass monotonicity", pass_monotonicity},
      {"complexity accounting", complexity_accounting},
      {"BD-rate oracle", [&] { return bd_rate_oracle(sweep_curve); }},
      {"MS-SSIM conformance", msssim_conformance},
      {"neighbour coupling", neighbour_coupling},
      {"RD sweep sanity", [&] { return sweep_sanity(sweep_curve); }},
  };
  // The BD-rate check runs on a curve produced by the sweep, so run that first.
  std::vector<int> order = {1, 2, 3, 4, 5, 6, 10, 7, 8, 9};
  std::map<int, std::pair<Outcome, double>> results;
  for (int id : order) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[id - 1].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    results[id] = {o, seconds_since(t0)};
  }

  int unexpected = 0;
  for (const auto& [id, r] : results) {
    const auto& [o, secs] = r;
    const bool expected = expected_failures.count(id) != 0;
    std::printf("%s %2d %-26s %s [%.1f s]%s\n", o.pass ? "PASS" : "FAIL", id, criteria[id - 1].first.c_str(),
                o.detail.c_str(), secs, !o.pass && expected ? " (known failure)" : "");
    if (o.pass == expected)
      ++unexpected;
  }
  std::fflush(stdout);
  return unexpected;
}
