#include "glazelab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "glazelab/neural.hpp"
#include "glazelab/parallel.hpp"

namespace glazelab::inline GLAZELAB_ABI {

namespace {

constexpr int kSide = kImageSize;
constexpr double kEdgeWidth = 1.5;

Image compose(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> px(kSide * kSide * 3);
  double c0[3], c1[3];
  for (double& v : c0) v = rng.uniform();
  for (double& v : c1) v = rng.uniform();
  const double angle = 2.0 * std::numbers::pi * rng.uniform();
  const double gx = std::cos(angle);
  const double gy = std::sin(angle);
  for (int y = 0; y < kSide; ++y) {
    for (int x = 0; x < kSide; ++x) {
      const double u = ((x - 31.5) * gx + (y - 31.5) * gy) / 90.0 + 0.5;
      for (int c = 0; c < 3; ++c) px[(y * kSide + x) * 3 + c] = c0[c] + (c1[c] - c0[c]) * u;
    }
  }

  const int shapes = 3 + static_cast<int>(rng.next_u64() % 5);
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = rng.uniform() < 0.5;
    const double cx = 64.0 * rng.uniform();
    const double cy = 64.0 * rng.uniform();
    const double a = 6.0 + 20.0 * rng.uniform();
    const double b = 6.0 + 20.0 * rng.uniform();
    const double rot = std::numbers::pi * rng.uniform();
    const double opacity = 0.7 + 0.3 * rng.uniform();
    double color[3];
    for (double& v : color) v = rng.uniform();
    const double cr = std::cos(rot);
    const double sr = std::sin(rot);
    for (int y = 0; y < kSide; ++y) {
      for (int x = 0; x < kSide; ++x) {
        const double dx = x + 0.5 - cx;
        const double dy = y + 0.5 - cy;
        const double u = dx * cr + dy * sr;
        const double v = -dx * sr + dy * cr;
        double dist;
        if (ellipse) {
          dist = (std::sqrt((u / a) * (u / a) + (v / b) * (v / b)) - 1.0) * std::min(a, b);
        } else {
          dist = std::max(std::abs(u) - a, std::abs(v) - b);
        }
        const double cover = std::clamp(0.5 - dist / kEdgeWidth, 0.0, 1.0) * opacity;
        if (cover <= 0) continue;
        for (int c = 0; c < 3; ++c) {
          double& p = px[(y * kSide + x) * 3 + c];
          p += (color[c] - p) * cover;
        }
      }
    }
  }
  std::vector<real> out(px.begin(), px.end());
  return Image(kSide, kSide, std::move(out));
}

}  // namespace

std::vector<Image> generate_content(std::uint64_t seed, int n) {
  if (n < 1) throw ValidationError("generate_content: n must be >= 1");
  std::vector<Image> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(compose(derive_seed(seed, static_cast<std::uint64_t>(i))));
  return out;
}

std::vector<Image> generate_artist_corpus(const ArtistSpec& spec, int n) {
  auto content = generate_content(spec.content_seed, n);
  std::vector<Image> out;
  out.reserve(content.size());
  for (const auto& c : content) out.push_back(stylize(c, spec.style));
  return out;
}

std::vector<Image> Bench::training_corpus() const {
  std::vector<Image> out;
  for (const auto& a : artists) {
    if (a.spec.in_pretraining) out.insert(out.end(), a.train.begin(), a.train.end());
  }
  return out;
}

const ArtistCorpus& Bench::artist(const std::string& name) const {
  for (const auto& a : artists) {
    if (a.spec.name == name) return a;
  }
  throw ValidationError("unknown artist '" + name + "'");
}

std::uint64_t master_seed_offset(std::uint64_t master_seed) {
  return master_seed * 0x9E3779B97F4A7C15ULL;
}

std::vector<ArtistSpec> standard_artists(const std::vector<StylePreset>& styles,
                                         std::uint64_t master_seed) {
  auto preset = [&](const std::string& name) { return find_style(styles, name).params; };
  // Not a preset: a flat-illustration look that no training artist shares.
  StyleParams flat_illustration{
      {{0.90f, 0.55f, 0.50f}, {0.30f, 0.60f, 0.60f}, {0.95f, 0.85f, 0.60f}, {0.20f, 0.25f, 0.35f},
       {0.65f, 0.80f, 0.70f}},
      1.2f,
      TextureKind::stroke,
      0.02f,
      21};
  // Content seeds sit on 2^20 boundaries so that seed ^ index never collides
  // across artists.
  std::vector<ArtistSpec> artists{
      {"historical_romantic", "romanticism", preset("romanticism"), 1ULL << 20, true},
      {"historical_realist", "realism", preset("realism"), 2ULL << 20, true},
      {"contemporary_textured", "impasto", preset("impasto"), 3ULL << 20, false},
      {"contemporary_smooth", "flat-illustration", flat_illustration, 4ULL << 20, false},
      {"training_stipple", "stipple", preset("stipple"), 5ULL << 20, true},
      {"training_crosshatch", "crosshatch", preset("crosshatch"), 6ULL << 20, true},
  };
  for (auto& a : artists) a.content_seed ^= master_seed_offset(master_seed);
  return artists;
}

Bench standard_bench(const std::vector<StylePreset>& styles, int jobs, std::uint64_t master_seed) {
  Bench bench;
  bench.styles = styles;
  const auto specs = standard_artists(styles, master_seed);
  bench.artists.resize(specs.size());
  for (std::size_t a = 0; a < specs.size(); ++a) {
    bench.artists[a].spec = specs[a];
    bench.artists[a].content = generate_content(specs[a].content_seed, kImagesPerArtist);
  }
  // stylize per image; slots are fixed so the worker count cannot matter
  const std::size_t total = specs.size() * kImagesPerArtist;
  std::vector<Image> styled(total);
  parallel_for(total, jobs, [&](std::size_t k) {
    const auto& artist = bench.artists[k / kImagesPerArtist];
    styled[k] = stylize(artist.content[k % kImagesPerArtist], artist.spec.style);
  });
  for (std::size_t k = 0; k < total; ++k) {
    auto& artist = bench.artists[k / kImagesPerArtist];
    const int i = static_cast<int>(k % kImagesPerArtist);
    (i < kTrainPerArtist ? artist.train : artist.holdout).push_back(std::move(styled[k]));
  }
  return bench;
}

double histogram_coverage(const std::vector<Image>& images, int bins) {
  std::vector<bool> hit(bins, false);
  for (const auto& img : images) {
    for (real v : img.pixels()) hit[std::min(bins - 1, static_cast<int>(v * bins))] = true;
  }
  return double(std::count(hit.begin(), hit.end(), true)) / bins;
}

}  // namespace glazelab
