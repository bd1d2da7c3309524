#include "glazelab/autoencoder.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "glazelab/parallel.hpp"

namespace glazelab::inline GLAZELAB_ABI {

namespace {

void require_input_size(const Image& x) {
  if (x.width() != kImageSize || x.height() != kImageSize) {
    throw ValidationError("autoencoder input must be 64x64, got " + std::to_string(x.width()) + "x" +
                          std::to_string(x.height()));
  }
}

Tensor latent_tensor(const Autoencoder& ae, const Latent& z) {
  if (z.values.size() != ae.latent_size()) {
    throw ValidationError("latent length " + std::to_string(z.values.size()) + " does not match " +
                          std::to_string(ae.latent_size()));
  }
  return Tensor({ae.latent_channels(), kLatentSide, kLatentSide}, z.values);
}

struct Grads {
  std::array<ConvGrads, 3> enc;
  std::array<ConvGrads, 3> dec;
  double loss = 0;
};

// Flattened parameter view: encoder then decoder, weights then bias.
std::vector<real*> param_blocks(Autoencoder& ae, std::vector<std::size_t>& sizes) {
  std::vector<real*> ptrs;
  for (auto* stack : {&ae.encoder, &ae.decoder}) {
    for (auto& l : *stack) {
      ptrs.push_back(l.weights.data.data());
      sizes.push_back(l.weights.size());
      ptrs.push_back(l.bias.data.data());
      sizes.push_back(l.bias.size());
    }
  }
  return ptrs;
}

Grads image_gradients(const Autoencoder& ae, const Tensor& x) {
  Grads g;
  const EncoderTrace et = encoder_forward(ae, x);
  const DecoderTrace dt = decoder_forward(ae, et.latent);
  const double n = double(x.size());
  Tensor grad_out(dt.output.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = double(dt.output.data[i]) - double(x.data[i]);
    g.loss += d * d;
    grad_out.data[i] = static_cast<real>(2.0 * d / n);
  }
  g.loss /= n;

  // decoder
  Tensor grad = sigmoid_backward(dt.output, grad_out);
  for (int i = 2; i >= 0; --i) {
    if (i < 2) grad = leaky_relu_backward(dt.pre[i], grad);
    g.dec[i] = conv2d_backward(ae.decoder[i], dt.conv_input[i], grad);
    grad = upsample2x_backward(g.dec[i].input);
  }
  // encoder
  for (int i = 2; i >= 0; --i) {
    if (i < 2) grad = leaky_relu_backward(et.pre[i], grad);
    const Tensor in = (i == 0) ? et.input : leaky_relu(et.pre[i - 1]);
    g.enc[i] = conv2d_backward(ae.encoder[i], in, grad);
    grad = g.enc[i].input;
  }
  return g;
}

}  // namespace

real latent_l2(const Latent& a, const Latent& b) {
  if (a.values.size() != b.values.size()) throw ValidationError("latent_l2: length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = double(a.values[i]) - double(b.values[i]);
    s += d * d;
  }
  return static_cast<real>(std::sqrt(s));
}

Autoencoder Autoencoder::zeros(int latent_channels) {
  if (latent_channels <= 0) throw ValidationError("latent channel count must be positive");
  return Autoencoder{
      {ConvLayer(3, 16, 2), ConvLayer(16, 32, 2), ConvLayer(32, latent_channels, 2)},
      {ConvLayer(latent_channels, 32, 1), ConvLayer(32, 16, 1), ConvLayer(16, 3, 1)}};
}

Autoencoder Autoencoder::he_initialized(Rng& rng, int latent_channels) {
  Autoencoder ae = zeros(latent_channels);
  for (auto& l : ae.encoder) l = he_init(l, rng);
  for (auto& l : ae.decoder) l = he_init(l, rng);
  return ae;
}

EncoderTrace encoder_forward(const Autoencoder& ae, const Tensor& x) {
  if (x.shape != std::vector<int>{3, kImageSize, kImageSize}) {
    throw ValidationError("encoder input must be a [3, 64, 64] tensor");
  }
  EncoderTrace t;
  t.input = x;
  t.pre[0] = conv2d_forward(ae.encoder[0], x);
  t.pre[1] = conv2d_forward(ae.encoder[1], leaky_relu(t.pre[0]));
  t.pre[2] = conv2d_forward(ae.encoder[2], leaky_relu(t.pre[1]));
  check_finite(t.pre[2], "latent");
  t.latent = t.pre[2];
  return t;
}

DecoderTrace decoder_forward(const Autoencoder& ae, const Tensor& latent) {
  DecoderTrace t;
  t.latent = latent;
  Tensor h = latent;
  for (int i = 0; i < 3; ++i) {
    t.conv_input[i] = upsample2x(h);
    t.pre[i] = conv2d_forward(ae.decoder[i], t.conv_input[i]);
    if (i < 2) h = leaky_relu(t.pre[i]);
  }
  t.output = sigmoid(t.pre[2]);
  check_finite(t.output, "decoder output");
  return t;
}

Tensor encoder_backward_input(const Autoencoder& ae, const EncoderTrace& trace,
                              const Tensor& grad_latent) {
  Tensor grad = grad_latent;
  for (int i = 2; i >= 0; --i) {
    if (i < 2) grad = leaky_relu_backward(trace.pre[i], grad);
    const auto& in_shape = (i == 0) ? trace.input.shape : trace.pre[i - 1].shape;
    grad = conv2d_backward_input(ae.encoder[i], in_shape, grad);
  }
  return grad;
}

Tensor decoder_backward_input(const Autoencoder& ae, const DecoderTrace& trace,
                              const Tensor& grad_output) {
  Tensor grad = sigmoid_backward(trace.output, grad_output);
  for (int i = 2; i >= 0; --i) {
    if (i < 2) grad = leaky_relu_backward(trace.pre[i], grad);
    grad = conv2d_backward_input(ae.decoder[i], trace.conv_input[i].shape, grad);
    grad = upsample2x_backward(grad);
  }
  return grad;
}

Latent encode(const Autoencoder& ae, const Image& x) {
  require_input_size(x);
  return Latent{encoder_forward(ae, image_to_tensor(x)).latent.data};
}

Image decode(const Autoencoder& ae, const Latent& z) {
  return tensor_to_image(decoder_forward(ae, latent_tensor(ae, z)).output);
}

Image reconstruct(const Autoencoder& ae, const Image& x) { return decode(ae, encode(ae, x)); }

real reconstruction_gap(const Autoencoder& ae, const Image& x) {
  return pixel_l2(x, reconstruct(ae, x));
}

TrainResult train(Autoencoder ae, std::span<const Image> corpus, const TrainConfig& cfg, Rng& rng,
                  const std::function<void(int, real)>& on_epoch) {
  if (corpus.empty()) throw ValidationError("train: empty corpus");
  if (cfg.epochs < 0 || cfg.batch < 1 || !(cfg.lr > 0)) throw ValidationError("train: bad hyperparameters");
  std::vector<Tensor> inputs;
  inputs.reserve(corpus.size());
  for (const auto& img : corpus) {
    require_input_size(img);
    inputs.push_back(image_to_tensor(img));
  }

  std::vector<std::size_t> sizes;
  const std::vector<real*> blocks = param_blocks(ae, sizes);
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t(0));
  AdamState state(total);
  const AdamConfig adam{cfg.lr};

  TrainResult result;
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::vector<real> params(total), grads(total);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the pinned generator
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t count = std::min<std::size_t>(cfg.batch, order.size() - start);
      std::vector<Grads> per_image(count);
      parallel_for(count, cfg.jobs, [&](std::size_t k) {
        per_image[k] = image_gradients(ae, inputs[order[start + k]]);
      });

      std::fill(grads.begin(), grads.end(), real(0));
      const real scale = real(1) / real(count);
      for (std::size_t k = 0; k < count; ++k) {
        const Grads& g = per_image[k];
        if (!std::isfinite(g.loss)) {
          throw NumericalError("training diverged (loss is not finite) at epoch " + std::to_string(epoch));
        }
        epoch_loss += g.loss;
        std::size_t off = 0;
        for (const auto* stack : {&g.enc, &g.dec}) {
          for (const auto& cg : *stack) {
            for (real v : cg.weights.data) grads[off++] += scale * v;
            for (real v : cg.bias.data) grads[off++] += scale * v;
          }
        }
      }

      std::size_t off = 0;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        std::copy(blocks[b], blocks[b] + sizes[b], params.begin() + off);
        off += sizes[b];
      }
      adam_step(params, grads, state, adam);
      off = 0;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        std::copy(params.begin() + off, params.begin() + off + sizes[b], blocks[b]);
        off += sizes[b];
      }
    }
    const real mean_loss = static_cast<real>(epoch_loss / double(order.size()));
    if (!std::isfinite(mean_loss)) {
      throw NumericalError("training diverged (loss is not finite) at epoch " + std::to_string(epoch));
    }
    result.loss_history.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  result.model = std::move(ae);
  return result;
}

std::vector<unsigned char> encode_weights(const Autoencoder& ae) {
  std::vector<ConvLayer> layers(ae.encoder.begin(), ae.encoder.end());
  layers.insert(layers.end(), ae.decoder.begin(), ae.decoder.end());
  return encode_layers(layers);
}

void save_weights(const Autoencoder& ae, const std::filesystem::path& path) {
  std::vector<ConvLayer> layers(ae.encoder.begin(), ae.encoder.end());
  layers.insert(layers.end(), ae.decoder.begin(), ae.decoder.end());
  save_layers(layers, path);
}

Autoencoder load_weights(const std::filesystem::path& path) {
  auto layers = load_layers(path);
  if (layers.size() != 6) throw ValidationError("weight file does not describe an autoencoder (expected 6 layers)");
  const int c = layers[2].out_channels;
  const Autoencoder expected = Autoencoder::zeros(c);
  for (int i = 0; i < 3; ++i) {
    const auto& e = expected.encoder[i];
    const auto& d = expected.decoder[i];
    const auto& le = layers[i];
    const auto& ld = layers[i + 3];
    if (le.in_channels != e.in_channels || le.out_channels != e.out_channels || le.stride != e.stride ||
        ld.in_channels != d.in_channels || ld.out_channels != d.out_channels || ld.stride != d.stride) {
      throw ValidationError("weight file manifest does not match the autoencoder architecture");
    }
  }
  Autoencoder ae;
  for (int i = 0; i < 3; ++i) {
    ae.encoder[i] = std::move(layers[i]);
    ae.decoder[i] = std::move(layers[i + 3]);
  }
  return ae;
}

}  // namespace glazelab
