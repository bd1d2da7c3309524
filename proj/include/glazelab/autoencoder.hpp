#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "glazelab/image.hpp"
#include "glazelab/neural.hpp"

namespace glazelab::inline GLAZELAB_ABI {

inline constexpr int kImageSize = 64;
inline constexpr int kLatentSide = 8;
inline constexpr int kDefaultLatentChannels = 8;

struct Latent {
  std::vector<real> values;

  friend bool operator==(const Latent&, const Latent&) = default;
};

real latent_l2(const Latent& a, const Latent& b);

// Encoder: 3->16 s2, 16->32 s2, 32->C s2 with LeakyReLU between layers.
// Decoder: mirrored stack, nearest 2x upsampling before each stride-1 conv,
// LeakyReLU between layers and a final sigmoid.
struct Autoencoder {
  std::array<ConvLayer, 3> encoder;
  std::array<ConvLayer, 3> decoder;

  int latent_channels() const { return encoder[2].out_channels; }
  std::size_t latent_size() const {
    return std::size_t(latent_channels()) * kLatentSide * kLatentSide;
  }

  // All weights and biases zero.
  static Autoencoder zeros(int latent_channels = kDefaultLatentChannels);
  static Autoencoder he_initialized(Rng& rng, int latent_channels = kDefaultLatentChannels);

  friend bool operator==(const Autoencoder&, const Autoencoder&) = default;
};

Latent encode(const Autoencoder& ae, const Image& x);
Image decode(const Autoencoder& ae, const Latent& z);
Image reconstruct(const Autoencoder& ae, const Image& x);
// pixel_l2(x, reconstruct(ae, x))
real reconstruction_gap(const Autoencoder& ae, const Image& x);

// Forward traces kept for the backward passes. `pre` holds each conv's
// pre-activation output.
struct EncoderTrace {
  Tensor input;
  std::array<Tensor, 3> pre;
  Tensor latent;  // == pre[2]
};

struct DecoderTrace {
  Tensor latent;
  std::array<Tensor, 3> conv_input;  // upsampled inputs to each conv
  std::array<Tensor, 3> pre;
  Tensor output;  // sigmoid(pre[2]), [3, 64, 64]
};

EncoderTrace encoder_forward(const Autoencoder& ae, const Tensor& x);
DecoderTrace decoder_forward(const Autoencoder& ae, const Tensor& latent);

// Gradient of a scalar w.r.t. the encoder input, given its gradient w.r.t.
// the latent. Weight gradients are not formed.
Tensor encoder_backward_input(const Autoencoder& ae, const EncoderTrace& trace,
                              const Tensor& grad_latent);
// Gradient w.r.t. the latent, given the gradient w.r.t. the decoder output.
Tensor decoder_backward_input(const Autoencoder& ae, const DecoderTrace& trace,
                              const Tensor& grad_output);

struct TrainConfig {
  int epochs = 60;
  real lr = real(2e-3);
  int batch = 8;
  int jobs = 1;
};

struct TrainResult {
  Autoencoder model;
  std::vector<real> loss_history;  // per-epoch mean MSE
};

// Adam on mean squared reconstruction error. The corpus order is reshuffled
// from `rng` every epoch; per-image gradients inside a batch may be computed
// on `cfg.jobs` workers but are summed in index order.
// `on_epoch(epoch, loss)` is an optional progress hook.
TrainResult train(Autoencoder ae, std::span<const Image> corpus, const TrainConfig& cfg, Rng& rng,
                  const std::function<void(int, real)>& on_epoch = {});

void save_weights(const Autoencoder& ae, const std::filesystem::path& path);
Autoencoder load_weights(const std::filesystem::path& path);
std::vector<unsigned char> encode_weights(const Autoencoder& ae);

}  // namespace glazelab
