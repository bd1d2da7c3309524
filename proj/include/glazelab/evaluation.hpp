#pragma once

#include <array>
#include <string>
#include <vector>

#include "glazelab/autoencoder.hpp"
#include "glazelab/neural.hpp"

namespace glazelab::inline GLAZELAB_ABI {

// ---- texture analysis -------------------------------------------------------

// Mean absolute value of the four Laplacian-pyramid difference bands
// (5-tap binomial filter, clamped borders) at scales 64, 32, 16, 8. Works on
// raw values, so signed residuals are fine; `values` is H x W x 3.
std::array<double, 4> band_energies(std::span<const real> values, int width, int height);
std::array<double, 4> band_energies(const Image& img);

// Finest-band energy of processed over that of original (+1e-10).
double texture_retention(const Image& original, const Image& processed);
// Finest-band energy of (processed - original).
double artifact_energy(const Image& original, const Image& processed);

// ---- style signatures -------------------------------------------------------

inline constexpr int kColorBinsPerChannel = 8;
inline constexpr int kColorBins = kColorBinsPerChannel * kColorBinsPerChannel * kColorBinsPerChannel;

struct StyleSignature {
  std::vector<double> color_hist;        // 512 bins, L1 normalized
  std::array<double, 4> texture_spectrum{};
  std::vector<double> latent_mean;
};

StyleSignature style_signature(const Autoencoder& ae, std::span<const Image> images);

struct SignatureDistance {
  double total = 0;
  double color = 0;    // L1 of histograms
  double texture = 0;  // L2 of spectra
  double latent = 0;   // cosine distance of latent means
};

inline constexpr double kColorWeight = 1.0;
inline constexpr double kTextureWeight = 2.0;
inline constexpr double kLatentWeight = 1.0;

SignatureDistance signature_distance_parts(const StyleSignature& a, const StyleSignature& b);
double signature_distance(const StyleSignature& a, const StyleSignature& b);

// Mimicry proxy: distance between what a mimic would learn from
// `train_images` and the artist's real holdout work. Lower = better mimicry.
SignatureDistance mimic_score(const Autoencoder& ae, std::span<const Image> train_images,
                              std::span<const Image> holdout_originals);

// ---- genre classifier -------------------------------------------------------

// conv 3->8 s2, 8->16 s2, 16->32 s2 (LeakyReLU), global average pool,
// linear map to one logit per genre.
struct GenreClassifier {
  std::vector<std::string> labels;
  std::array<ConvLayer, 3> convs;
  Tensor dense_weights;  // [genres, 32]
  Tensor dense_bias;     // [genres]

  std::vector<real> logits(const Image& img) const;
  int predict(const Image& img) const;
};

struct GenreTrainConfig {
  int epochs = 120;
  real lr = real(3e-3);
  int batch = 8;
};

GenreClassifier train_genre_classifier(std::span<const Image> images, std::span<const int> labels,
                                       std::vector<std::string> label_names,
                                       const GenreTrainConfig& cfg, Rng& rng);

double genre_accuracy(const GenreClassifier& clf, std::span<const Image> images,
                      std::span<const int> labels);

// ---- reconstruction-gap population report ----------------------------------

struct GapReport {
  std::vector<double> clean;
  std::vector<double> treated;
  double mean_clean = 0;
  double mean_treated = 0;
  double sd_clean = 0;
  double sd_treated = 0;
  double cohens_d = 0;

  // Columns: image_id, population, gap.
  std::string to_csv() const;
};

GapReport gap_report(const Autoencoder& ae, std::span<const Image> clean,
                     std::span<const Image> treated, int jobs = 1);

struct SampleStats {
  double mean = 0;
  double sd = 0;  // n - 1 denominator
};

SampleStats sample_stats(std::span<const double> values);
// (mean_b - mean_a) / pooled standard deviation; 0 when both are constant
// and equal.
double cohens_d(std::span<const double> a, std::span<const double> b);
double median(std::vector<double> values);

}  // namespace glazelab
