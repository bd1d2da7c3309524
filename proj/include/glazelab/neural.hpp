#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <vector>

#include "glazelab/common.hpp"
#include "glazelab/image.hpp"

namespace glazelab::inline GLAZELAB_ABI {

// Dense row-major tensor. Activations are laid out [C, H, W].
struct Tensor {
  std::vector<int> shape;
  std::vector<real> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, real fill = real(0));
  Tensor(std::vector<int> shape_, std::vector<real> data_);

  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }

  real& operator[](std::size_t i) { return data[i]; }
  real operator[](std::size_t i) const { return data[i]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t shape_product(std::span<const int> shape);

// Throws NumericalError naming `what` if any entry is NaN or Inf.
void check_finite(const Tensor& t, const char* what);

// Image (H, W, 3 interleaved) <-> activation tensor [3, H, W].
Tensor image_to_tensor(const Image& img);
// Clamps into [0, 1].
Image tensor_to_image(const Tensor& t);

// SplitMix64 generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// Per-item seed derivation used by all batch drivers.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return master ^ index;
}

// n standard normal samples, Box-Muller over consecutive uniform pairs
// (both outputs of each pair are used; an odd tail discards the sine half).
std::vector<double> rng_normal(Rng& rng, std::size_t n);

// 3x3 convolution, zero padding 1, stride 1 or 2.
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  Tensor weights;  // [out, in, 3, 3]
  Tensor bias;     // [out]

  ConvLayer() = default;
  ConvLayer(int in, int out, int stride_);

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

Tensor conv2d_forward(const ConvLayer& layer, const Tensor& input);
ConvGrads conv2d_backward(const ConvLayer& layer, const Tensor& input,
                          const Tensor& grad_out);
// grad_input only; skips the weight reductions.
Tensor conv2d_backward_input(const ConvLayer& layer, std::span<const int> input_shape,
                             const Tensor& grad_out);

inline constexpr real kLeakySlope = real(0.2);

Tensor leaky_relu(const Tensor& input);
Tensor leaky_relu_backward(const Tensor& input, const Tensor& grad_out);

Tensor sigmoid(const Tensor& input);
// Takes the forward output, not the input.
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out);

// Nearest-neighbour 2x upsampling of a [C, H, W] tensor and its adjoint.
Tensor upsample2x(const Tensor& input);
Tensor upsample2x_backward(const Tensor& grad_out);

// Half-pixel bilinear resize of a [C, H, W] tensor and its adjoint.
Tensor resize_bilinear(const Tensor& input, int new_height, int new_width);
Tensor resize_bilinear_backward(const Tensor& grad_out, int in_height, int in_width);

struct AdamConfig {
  real lr = real(0.001);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
};

struct AdamState {
  std::vector<real> m;
  std::vector<real> v;
  std::int64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, real(0)), v(n, real(0)) {}
};

// One bias-corrected Adam update of `params` in place. Rejects non-finite
// gradients with NumericalError before touching any state.
void adam_step(std::span<real> params, std::span<const real> grads, AdamState& state,
               const AdamConfig& cfg);

// Weights ~ Normal(0, sqrt(2 / (in * 9))), bias zero.
ConvLayer he_init(ConvLayer layer, Rng& rng);

// NNW1 container: magic, layer count, per-layer (in, out, stride), then the
// float32 little-endian weights and bias of each layer in declaration order.
void save_layers(std::span<const ConvLayer> layers, const std::filesystem::path& path);
std::vector<ConvLayer> load_layers(const std::filesystem::path& path);
std::vector<unsigned char> encode_layers(std::span<const ConvLayer> layers);
std::vector<ConvLayer> decode_layers(std::span<const unsigned char> bytes);

}  // namespace glazelab
