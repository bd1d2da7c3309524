#include "glazelab/neural.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

namespace glazelab::inline GLAZELAB_ABI {

namespace {

void require(bool ok, const char* message) {
  if (!ok) throw ValidationError(message);
}

void require_chw(const Tensor& t, const char* what) {
  if (t.shape.size() != 3) throw ValidationError(std::string(what) + ": expected a [C, H, W] tensor");
}

// Output x range [lo, hi) for which ix = ox * stride + k - 1 lies in [0, in).
struct Span {
  int lo;
  int hi;
};

Span valid_outputs(int k, int stride, int in_size, int out_size) {
  const int lo = (k == 0) ? 1 : 0;
  if (in_size - k < 0) return {lo, lo};
  const int last = (in_size - k) / stride;  // ox*stride + k - 1 <= in_size - 1
  return {lo, std::min(out_size, last + 1)};
}

int out_extent(int in, int stride) { return (in + stride - 1) / stride; }

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const unsigned char> bytes, std::size_t& offset) {
  if (offset + 4 > bytes.size()) throw ValidationError("NNW1 file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[offset + i]) << (8 * i);
  offset += 4;
  return v;
}

}  // namespace

std::size_t shape_product(std::span<const int> shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ValidationError("tensor dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape_, real fill)
    : shape(std::move(shape_)), data(shape_product(shape), fill) {}

Tensor::Tensor(std::vector<int> shape_, std::vector<real> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (data.size() != shape_product(shape)) throw ValidationError("tensor data length does not match shape");
}

void check_finite(const Tensor& t, const char* what) {
  for (real v : t.data) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value in ") + what);
  }
}

Tensor image_to_tensor(const Image& img) {
  const int h = img.height();
  const int w = img.width();
  Tensor t({3, h, w});
  const auto px = img.pixels();
  const std::size_t plane = std::size_t(h) * w;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) t.data[c * plane + i] = px[i * 3 + c];
  }
  return t;
}

Image tensor_to_image(const Tensor& t) {
  require_chw(t, "tensor_to_image");
  require(t.dim(0) == 3, "tensor_to_image: expected 3 channels");
  const int h = t.dim(1);
  const int w = t.dim(2);
  const std::size_t plane = std::size_t(h) * w;
  std::vector<real> px(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) px[i * 3 + c] = t.data[c * plane + i];
  }
  return Image(w, h, std::move(px));
}

std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

std::vector<double> rng_normal(Rng& rng, std::size_t n) {
  std::vector<double> out;
  out.reserve(n);
  while (out.size() < n) {
    const double u1 = 1.0 - rng.uniform();  // (0, 1]
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    out.push_back(r * std::cos(theta));
    if (out.size() < n) out.push_back(r * std::sin(theta));
  }
  return out;
}

ConvLayer::ConvLayer(int in, int out, int stride_)
    : in_channels(in),
      out_channels(out),
      stride(stride_),
      weights({out, in, 3, 3}),
      bias({out}) {
  require(in > 0 && out > 0, "conv layer channel counts must be positive");
  require(stride_ == 1 || stride_ == 2, "conv layer stride must be 1 or 2");
}

Tensor conv2d_forward(const ConvLayer& layer, const Tensor& input) {
  require_chw(input, "conv2d_forward");
  if (input.dim(0) != layer.in_channels) throw ValidationError("conv2d_forward: channel mismatch");
  check_finite(input, "conv2d_forward input");
  const int cin = layer.in_channels;
  const int cout = layer.out_channels;
  const int s = layer.stride;
  const int h = input.dim(1);
  const int w = input.dim(2);
  const int ho = out_extent(h, s);
  const int wo = out_extent(w, s);
  Tensor out({cout, ho, wo});
  const real* in = input.data.data();
  const real* wt = layer.weights.data.data();
  for (int oc = 0; oc < cout; ++oc) {
    real* out_plane = out.data.data() + std::size_t(oc) * ho * wo;
    std::fill(out_plane, out_plane + std::size_t(ho) * wo, layer.bias.data[oc]);
    for (int ic = 0; ic < cin; ++ic) {
      const real* in_plane = in + std::size_t(ic) * h * w;
      const real* k = wt + (std::size_t(oc) * cin + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const Span rows = valid_outputs(ky, s, h, ho);
        for (int kx = 0; kx < 3; ++kx) {
          const real kv = k[ky * 3 + kx];
          const Span cols = valid_outputs(kx, s, w, wo);
          for (int oy = rows.lo; oy < rows.hi; ++oy) {
            const real* in_row = in_plane + std::size_t(oy * s + ky - 1) * w;
            real* out_row = out_plane + std::size_t(oy) * wo;
            if (s == 1) {
              for (int ox = cols.lo; ox < cols.hi; ++ox) out_row[ox] += kv * in_row[ox + kx - 1];
            } else {
              for (int ox = cols.lo; ox < cols.hi; ++ox) out_row[ox] += kv * in_row[2 * ox + kx - 1];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor conv2d_backward_input(const ConvLayer& layer, std::span<const int> input_shape,
                             const Tensor& grad_out) {
  require(input_shape.size() == 3, "conv2d_backward: expected a [C, H, W] input shape");
  require(input_shape[0] == layer.in_channels, "conv2d_backward: channel mismatch");
  const int cin = layer.in_channels;
  const int cout = layer.out_channels;
  const int s = layer.stride;
  const int h = input_shape[1];
  const int w = input_shape[2];
  const int ho = out_extent(h, s);
  const int wo = out_extent(w, s);
  if (grad_out.shape != std::vector<int>{cout, ho, wo}) throw ValidationError("conv2d_backward: grad_out shape mismatch");
  Tensor grad_in({cin, h, w});
  const real* wt = layer.weights.data.data();
  for (int oc = 0; oc < cout; ++oc) {
    const real* g_plane = grad_out.data.data() + std::size_t(oc) * ho * wo;
    for (int ic = 0; ic < cin; ++ic) {
      real* gi_plane = grad_in.data.data() + std::size_t(ic) * h * w;
      const real* k = wt + (std::size_t(oc) * cin + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const Span rows = valid_outputs(ky, s, h, ho);
        for (int kx = 0; kx < 3; ++kx) {
          const real kv = k[ky * 3 + kx];
          const Span cols = valid_outputs(kx, s, w, wo);
          for (int oy = rows.lo; oy < rows.hi; ++oy) {
            real* gi_row = gi_plane + std::size_t(oy * s + ky - 1) * w;
            const real* g_row = g_plane + std::size_t(oy) * wo;
            if (s == 1) {
              for (int ox = cols.lo; ox < cols.hi; ++ox) gi_row[ox + kx - 1] += kv * g_row[ox];
            } else {
              for (int ox = cols.lo; ox < cols.hi; ++ox) gi_row[2 * ox + kx - 1] += kv * g_row[ox];
            }
          }
        }
      }
    }
  }
  return grad_in;
}

ConvGrads conv2d_backward(const ConvLayer& layer, const Tensor& input, const Tensor& grad_out) {
  require_chw(input, "conv2d_backward");
  ConvGrads grads;
  grads.input = conv2d_backward_input(layer, input.shape, grad_out);
  const int cin = layer.in_channels;
  const int cout = layer.out_channels;
  const int s = layer.stride;
  const int h = input.dim(1);
  const int w = input.dim(2);
  const int ho = out_extent(h, s);
  const int wo = out_extent(w, s);
  grads.weights = Tensor({cout, cin, 3, 3});
  grads.bias = Tensor({cout});
  // Per-column partial sums keep the inner loops elementwise (vectorizable
  // without reassociation); the final reduction runs in index order.
  std::vector<real> partial(wo);
  for (int oc = 0; oc < cout; ++oc) {
    const real* g_plane = grad_out.data.data() + std::size_t(oc) * ho * wo;
    real bsum = 0;
    for (std::size_t i = 0; i < std::size_t(ho) * wo; ++i) bsum += g_plane[i];
    grads.bias.data[oc] = bsum;
    for (int ic = 0; ic < cin; ++ic) {
      const real* in_plane = input.data.data() + std::size_t(ic) * h * w;
      real* gk = grads.weights.data.data() + (std::size_t(oc) * cin + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const Span rows = valid_outputs(ky, s, h, ho);
        for (int kx = 0; kx < 3; ++kx) {
          const Span cols = valid_outputs(kx, s, w, wo);
          std::fill(partial.begin(), partial.end(), real(0));
          for (int oy = rows.lo; oy < rows.hi; ++oy) {
            const real* in_row = in_plane + std::size_t(oy * s + ky - 1) * w;
            const real* g_row = g_plane + std::size_t(oy) * wo;
            if (s == 1) {
              for (int ox = cols.lo; ox < cols.hi; ++ox) partial[ox] += g_row[ox] * in_row[ox + kx - 1];
            } else {
              for (int ox = cols.lo; ox < cols.hi; ++ox) partial[ox] += g_row[ox] * in_row[2 * ox + kx - 1];
            }
          }
          real acc = 0;
          for (int ox = cols.lo; ox < cols.hi; ++ox) acc += partial[ox];
          gk[ky * 3 + kx] = acc;
        }
      }
    }
  }
  return grads;
}

Tensor leaky_relu(const Tensor& input) {
  Tensor out = input;
  for (real& v : out.data) v = v >= 0 ? v : kLeakySlope * v;
  return out;
}

Tensor leaky_relu_backward(const Tensor& input, const Tensor& grad_out) {
  require(input.shape == grad_out.shape, "leaky_relu_backward: shape mismatch");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (input.data[i] < 0) g.data[i] *= kLeakySlope;
  }
  return g;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  for (real& v : out.data) v = real(1) / (real(1) + std::exp(-v));
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out) {
  require(output.shape == grad_out.shape, "sigmoid_backward: shape mismatch");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= output.data[i] * (real(1) - output.data[i]);
  return g;
}

Tensor upsample2x(const Tensor& input) {
  require_chw(input, "upsample2x");
  const int c = input.dim(0);
  const int h = input.dim(1);
  const int w = input.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch) {
    const real* src = input.data.data() + std::size_t(ch) * h * w;
    real* dst = out.data.data() + std::size_t(ch) * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y) {
      const real* srow = src + std::size_t(y / 2) * w;
      real* drow = dst + std::size_t(y) * 2 * w;
      for (int x = 0; x < 2 * w; ++x) drow[x] = srow[x / 2];
    }
  }
  return out;
}

Tensor upsample2x_backward(const Tensor& grad_out) {
  require_chw(grad_out, "upsample2x_backward");
  const int c = grad_out.dim(0);
  require(grad_out.dim(1) % 2 == 0 && grad_out.dim(2) % 2 == 0, "upsample2x_backward: odd extent");
  const int h = grad_out.dim(1) / 2;
  const int w = grad_out.dim(2) / 2;
  Tensor g({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    const real* src = grad_out.data.data() + std::size_t(ch) * 4 * h * w;
    real* dst = g.data.data() + std::size_t(ch) * h * w;
    for (int y = 0; y < h; ++y) {
      const real* r0 = src + std::size_t(2 * y) * 2 * w;
      const real* r1 = r0 + 2 * w;
      for (int x = 0; x < w; ++x) {
        dst[std::size_t(y) * w + x] = (r0[2 * x] + r0[2 * x + 1]) + (r1[2 * x] + r1[2 * x + 1]);
      }
    }
  }
  return g;
}

Tensor resize_bilinear(const Tensor& input, int new_height, int new_width) {
  require_chw(input, "resize_bilinear");
  require(new_height > 0 && new_width > 0, "resize_bilinear: zero dimension");
  const int c = input.dim(0);
  const int h = input.dim(1);
  const int w = input.dim(2);
  if (h == new_height && w == new_width) return input;
  std::vector<detail::BilinearTap> xs(new_width), ys(new_height);
  for (int x = 0; x < new_width; ++x) xs[x] = detail::bilinear_tap(x, w, new_width);
  for (int y = 0; y < new_height; ++y) ys[y] = detail::bilinear_tap(y, h, new_height);
  Tensor out({c, new_height, new_width});
  for (int ch = 0; ch < c; ++ch) {
    const real* src = input.data.data() + std::size_t(ch) * h * w;
    real* dst = out.data.data() + std::size_t(ch) * new_height * new_width;
    for (int y = 0; y < new_height; ++y) {
      const auto ty = ys[y];
      for (int x = 0; x < new_width; ++x) {
        const auto tx = xs[x];
        const double top = (1 - tx.frac) * src[std::size_t(ty.lo) * w + tx.lo] + tx.frac * src[std::size_t(ty.lo) * w + tx.hi];
        const double bot = (1 - tx.frac) * src[std::size_t(ty.hi) * w + tx.lo] + tx.frac * src[std::size_t(ty.hi) * w + tx.hi];
        dst[std::size_t(y) * new_width + x] = static_cast<real>((1 - ty.frac) * top + ty.frac * bot);
      }
    }
  }
  return out;
}

Tensor resize_bilinear_backward(const Tensor& grad_out, int in_height, int in_width) {
  require_chw(grad_out, "resize_bilinear_backward");
  const int c = grad_out.dim(0);
  const int nh = grad_out.dim(1);
  const int nw = grad_out.dim(2);
  if (nh == in_height && nw == in_width) return grad_out;
  std::vector<detail::BilinearTap> xs(nw), ys(nh);
  for (int x = 0; x < nw; ++x) xs[x] = detail::bilinear_tap(x, in_width, nw);
  for (int y = 0; y < nh; ++y) ys[y] = detail::bilinear_tap(y, in_height, nh);
  Tensor g({c, in_height, in_width});
  for (int ch = 0; ch < c; ++ch) {
    const real* src = grad_out.data.data() + std::size_t(ch) * nh * nw;
    real* dst = g.data.data() + std::size_t(ch) * in_height * in_width;
    for (int y = 0; y < nh; ++y) {
      const auto ty = ys[y];
      for (int x = 0; x < nw; ++x) {
        const auto tx = xs[x];
        const double v = src[std::size_t(y) * nw + x];
        dst[std::size_t(ty.lo) * in_width + tx.lo] += static_cast<real>(v * (1 - ty.frac) * (1 - tx.frac));
        dst[std::size_t(ty.lo) * in_width + tx.hi] += static_cast<real>(v * (1 - ty.frac) * tx.frac);
        dst[std::size_t(ty.hi) * in_width + tx.lo] += static_cast<real>(v * ty.frac * (1 - tx.frac));
        dst[std::size_t(ty.hi) * in_width + tx.hi] += static_cast<real>(v * ty.frac * tx.frac);
      }
    }
  }
  return g;
}

void adam_step(std::span<real> params, std::span<const real> grads, AdamState& state,
               const AdamConfig& cfg) {
  require(params.size() == grads.size(), "adam_step: parameter/gradient size mismatch");
  if (state.m.empty() && state.v.empty() && state.step == 0) state = AdamState(params.size());
  require(state.m.size() == params.size() && state.v.size() == params.size(),
          "adam_step: optimizer state size mismatch");
  for (real g : grads) {
    if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(double(cfg.beta1), double(state.step));
  const double bc2 = 1.0 - std::pow(double(cfg.beta2), double(state.step));
  const real step_size = static_cast<real>(double(cfg.lr) / bc1);
  const real inv_sqrt_bc2 = static_cast<real>(1.0 / std::sqrt(bc2));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const real g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (real(1) - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (real(1) - cfg.beta2) * g * g;
    const real denom = std::sqrt(state.v[i]) * inv_sqrt_bc2 + cfg.eps;
    params[i] -= step_size * state.m[i] / denom;
  }
}

ConvLayer he_init(ConvLayer layer, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / (double(layer.in_channels) * 9.0));
  const auto normals = rng_normal(rng, layer.weights.size());
  for (std::size_t i = 0; i < normals.size(); ++i) {
    layer.weights.data[i] = static_cast<real>(normals[i] * std_dev);
  }
  std::fill(layer.bias.data.begin(), layer.bias.data.end(), real(0));
  return layer;
}

std::vector<unsigned char> encode_layers(std::span<const ConvLayer> layers) {
  std::vector<unsigned char> out = {'N', 'N', 'W', '1'};
  put_u32(out, static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    put_u32(out, static_cast<std::uint32_t>(l.in_channels));
    put_u32(out, static_cast<std::uint32_t>(l.out_channels));
    put_u32(out, static_cast<std::uint32_t>(l.stride));
  }
  for (const auto& l : layers) {
    for (real v : l.weights.data) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    for (real v : l.bias.data) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

std::vector<ConvLayer> decode_layers(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "NNW1", 4) != 0) {
    throw ValidationError("not an NNW1 weight file (bad magic)");
  }
  std::size_t pos = 4;
  const std::uint32_t count = get_u32(bytes, pos);
  if (count == 0 || count > 1024) throw ValidationError("NNW1 layer count out of range");
  std::vector<ConvLayer> layers;
  layers.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto in = get_u32(bytes, pos);
    const auto out = get_u32(bytes, pos);
    const auto stride = get_u32(bytes, pos);
    if (in == 0 || out == 0 || in > 4096 || out > 4096) throw ValidationError("NNW1 manifest: bad channel count");
    layers.emplace_back(static_cast<int>(in), static_cast<int>(out), static_cast<int>(stride));
  }
  for (auto& l : layers) {
    for (real& v : l.weights.data) v = static_cast<real>(std::bit_cast<float>(get_u32(bytes, pos)));
    for (real& v : l.bias.data) v = static_cast<real>(std::bit_cast<float>(get_u32(bytes, pos)));
    check_finite(l.weights, "NNW1 weights");
    check_finite(l.bias, "NNW1 bias");
  }
  if (pos != bytes.size()) throw ValidationError("NNW1 file has trailing bytes");
  return layers;
}

void save_layers(std::span<const ConvLayer> layers, const std::filesystem::path& path) {
  const auto bytes = encode_layers(layers);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write weight file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<ConvLayer> load_layers(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open weight file: " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_layers(bytes);
}

}  // namespace glazelab
