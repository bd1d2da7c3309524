#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "glazelab/autoencoder.hpp"

namespace glazelab::inline GLAZELAB_ABI {

// Multi-scale feature distance over a frozen copy of an autoencoder's first
// two encoder layers. At each scale {1, 1/2, 1/4} and each tapped layer the
// post-activation feature vector at every spatial position is unit
// normalized across channels; the layer term is the spatial mean of the
// squared difference summed over channels. Layer terms are weighted, summed
// and averaged over the scales.
class PerceptualMetric {
 public:
  static constexpr std::array<int, 3> kScales = {64, 32, 16};
  static constexpr real kNormEps = real(1e-10);

  explicit PerceptualMetric(const Autoencoder& ae, std::array<real, 2> layer_weights = {1, 1});

  // Cached features of a fixed second argument.
  struct Reference {
    std::array<std::array<Tensor, 2>, 3> normalized;  // [scale][layer]
  };

  Reference prepare(const Tensor& b) const;

  real distance(const Tensor& a, const Reference& b) const;
  // Returns pd and writes d pd / d a into `grad`.
  real value_and_gradient(const Tensor& a, const Reference& b, Tensor& grad) const;

  const std::array<ConvLayer, 2>& layers() const { return layers_; }
  const std::array<real, 2>& layer_weights() const { return weights_; }

 private:
  std::array<ConvLayer, 2> layers_;
  std::array<real, 2> weights_;
};

real pd(const PerceptualMetric& m, const Image& a, const Image& b);
// d pd(a, b) / d a as a [3, 64, 64] tensor.
Tensor pd_gradient(const PerceptualMetric& m, const Image& a, const Image& b_fixed);

inline constexpr std::array<double, 4> kCalibrationAmplitudes = {0.01, 0.02, 0.05, 0.1};

struct CalibrationRow {
  double amplitude = 0;
  double median_pd = 0;
  double mean_pd = 0;
};

// pd(clamp01(x + U(-a, a)), x) over `images` for each amplitude a; the noise
// is drawn from Rng(derive_seed(seed, amplitude index)).
std::vector<CalibrationRow> pd_calibration(const PerceptualMetric& m, std::span<const Image> images,
                                           std::span<const double> amplitudes, std::uint64_t seed);

}  // namespace glazelab
