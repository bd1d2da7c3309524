#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "glazelab/dataset.hpp"
#include "glazelab/evaluation.hpp"
#include "support.hpp"

using namespace glazelab;

TEST_CASE("generated content") {
  const auto a = generate_content(0, 50);
  CHECK(a.size() == 50);
  CHECK(generate_content(0, 50) == a);
  // image i depends only on (seed, i)
  CHECK(generate_content(0, 3)[2] == a[2]);
  CHECK(generate_content(1, 1)[0] != a[0]);
  for (const auto& img : a) {
    CHECK(img.width() == 64);
    CHECK(img.height() == 64);
  }
  CHECK(histogram_coverage(a) >= 0.6);
  CHECK_THROWS_AS(generate_content(0, 0), ValidationError);
}

TEST_CASE("histogram coverage") {
  CHECK(histogram_coverage({Image::filled(4, 4, 0, 0, 0)}) == doctest::Approx(1.0 / 16));
  CHECK(histogram_coverage({Image::filled(4, 4, 1, 1, 1)}) == doctest::Approx(1.0 / 16));
  std::vector<real> ramp(16 * 3);
  for (int i = 0; i < 16; ++i) ramp[i * 3] = ramp[i * 3 + 1] = ramp[i * 3 + 2] = real(i) / 16 + real(0.01);
  CHECK(histogram_coverage({Image(16, 1, ramp)}) == 1.0);
}

TEST_CASE("standard bench") {
  const Bench b = standard_bench();
  REQUIRE(b.artists.size() == 6);
  std::set<std::uint64_t> seeds;
  int pretraining = 0;
  for (const auto& a : b.artists) {
    INFO(a.spec.name);
    CHECK(a.train.size() == std::size_t(kTrainPerArtist));
    CHECK(a.holdout.size() == std::size_t(kImagesPerArtist - kTrainPerArtist));
    CHECK(a.content.size() == std::size_t(kImagesPerArtist));
    CHECK(a.train[0] == stylize(a.content[0], a.spec.style));
    CHECK(a.holdout[0] == stylize(a.content[kTrainPerArtist], a.spec.style));
    CHECK(generate_artist_corpus(a.spec, 2)[1] == a.train[1]);
    seeds.insert(a.spec.content_seed);
    pretraining += a.spec.in_pretraining;
  }
  CHECK(seeds.size() == 6);
  CHECK(pretraining == 4);
  CHECK(b.training_corpus().size() == std::size_t(4 * kTrainPerArtist));
  CHECK(b.artist("contemporary_textured").spec.smooth_category() == SurfaceCategory::textured);
  CHECK(b.artist("contemporary_smooth").spec.smooth_category() == SurfaceCategory::smooth);
  CHECK(b.artist("historical_realist").spec.smooth_category() == SurfaceCategory::smooth);
  CHECK(b.artist("historical_romantic").spec.smooth_category() == SurfaceCategory::smooth);
  CHECK(b.artist("training_stipple").spec.smooth_category() == SurfaceCategory::textured);
  CHECK_FALSE(b.artist("contemporary_smooth").spec.in_pretraining);
  CHECK_FALSE(b.artist("contemporary_textured").spec.in_pretraining);
  CHECK_THROWS_AS(b.artist("nobody"), ValidationError);

  SUBCASE("training corpus excludes contemporary artists") {
    const auto corpus = b.training_corpus();
    for (const auto& a : b.artists) {
      const bool present = std::find(corpus.begin(), corpus.end(), a.train[0]) != corpus.end();
      CHECK(present == a.spec.in_pretraining);
    }
  }
  SUBCASE("smooth artists carry less fine texture") {
    auto finest = [&](const char* name) {
      double s = 0;
      for (const auto& img : b.artist(name).train) s += band_energies(img)[0];
      return s / kTrainPerArtist;
    };
    const double smooth = std::max(finest("historical_romantic"), finest("historical_realist"));
    for (const char* textured : {"contemporary_textured", "training_stipple", "training_crosshatch"}) {
      CHECK(smooth < finest(textured));
    }
  }
  SUBCASE("worker count does not change the images") {
    const Bench b3 = standard_bench(default_styles(), 3);
    for (std::size_t a = 0; a < b.artists.size(); ++a) {
      CHECK(b3.artists[a].train == b.artists[a].train);
      CHECK(b3.artists[a].holdout == b.artists[a].holdout);
    }
  }
}

TEST_CASE("same content, different style") {
  Rng rng(2);
  const PerceptualMetric m(Autoencoder::he_initialized(rng));
  auto artists = standard_artists(default_styles());
  ArtistSpec a = artists[0];
  ArtistSpec b = artists[2];
  b.content_seed = a.content_seed;
  const auto xa = generate_artist_corpus(a, 3);
  const auto xb = generate_artist_corpus(b, 3);
  for (int i = 0; i < 3; ++i) CHECK(pd(m, xa[i], xb[i]) > 0);
}

TEST_CASE("smooth styles carry less fine texture than textured ones on the same content") {
  const auto styles = default_styles();
  for (const char* smooth : {"realism", "romanticism"}) {
    for (const char* textured : {"impasto", "stipple", "crosshatch", "cubist-blocky"}) {
      INFO(smooth << " vs " << textured);
      const ArtistSpec a{"a", smooth, find_style(styles, smooth).params, 99, true};
      const ArtistSpec b{"b", textured, find_style(styles, textured).params, 99, true};
      double ea = 0, eb = 0;
      for (const auto& img : generate_artist_corpus(a, 10)) ea += band_energies(img)[0];
      for (const auto& img : generate_artist_corpus(b, 10)) eb += band_energies(img)[0];
      CHECK(ea < eb);
    }
  }
}

TEST_CASE("master seed") {
  CHECK(master_seed_offset(0) == 0);
  CHECK(master_seed_offset(1) != 0);
  const auto base = standard_artists(default_styles());
  const auto moved = standard_artists(default_styles(), 5);
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(moved[i].content_seed == (base[i].content_seed ^ master_seed_offset(5)));
    seeds.insert(moved[i].content_seed);
  }
  CHECK(seeds.size() == base.size());
}
