#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glazelab/image.hpp"
#include "glazelab/style.hpp"

namespace glazelab::inline GLAZELAB_ABI {

enum class SurfaceCategory { smooth, textured };

struct ArtistSpec {
  std::string name;
  std::string style_name;
  StyleParams style;
  std::uint64_t content_seed = 0;
  // Member of the autoencoder training corpus ("historical" artist).
  bool in_pretraining = false;

  SurfaceCategory smooth_category() const {
    return style.is_smooth() ? SurfaceCategory::smooth : SurfaceCategory::textured;
  }
};

// n seeded 64x64 compositions: gradient background plus 3-7 soft-edged
// ellipses and rectangles. Image i depends only on derive_seed(seed, i).
std::vector<Image> generate_content(std::uint64_t seed, int n);

// stylize(content_i, spec.style) over generate_content(spec.content_seed, n).
std::vector<Image> generate_artist_corpus(const ArtistSpec& spec, int n);

struct ArtistCorpus {
  ArtistSpec spec;
  std::vector<Image> content;  // unstylized sources, train then holdout
  std::vector<Image> train;
  std::vector<Image> holdout;
};

struct Bench {
  std::vector<StylePreset> styles;
  std::vector<ArtistCorpus> artists;

  // Train splits of every in_pretraining artist, in artist order.
  std::vector<Image> training_corpus() const;
  const ArtistCorpus& artist(const std::string& name) const;
};

inline constexpr int kImagesPerArtist = 40;
inline constexpr int kTrainPerArtist = 30;

// Content-seed offset for a master seed; zero for master seed 0. Applied by
// XOR, so per-image seeds stay distinct across artists.
std::uint64_t master_seed_offset(std::uint64_t master_seed);

// Artist roster (no images) for the standard bench.
std::vector<ArtistSpec> standard_artists(const std::vector<StylePreset>& styles,
                                         std::uint64_t master_seed = 0);

// Six artists, 40 images each (30 train / 10 holdout):
//   historical_romantic, historical_realist   smooth, in_pretraining
//   contemporary_textured, contemporary_smooth not in_pretraining
//   training_stipple, training_crosshatch      textured, in_pretraining
Bench standard_bench(const std::vector<StylePreset>& styles = default_styles(), int jobs = 1,
                     std::uint64_t master_seed = 0);

// Fraction of 16 equal-width value bins hit by any channel of any pixel.
double histogram_coverage(const std::vector<Image>& images, int bins = 16);

}  // namespace glazelab
