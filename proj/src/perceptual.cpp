#include "glazelab/perceptual.hpp"

#include <algorithm>
#include <cmath>

namespace glazelab::inline GLAZELAB_ABI {

namespace {

struct ScaleTrace {
  Tensor input;   // resized image
  Tensor pre0;
  Tensor act0;
  Tensor pre1;
  Tensor act1;
  std::array<Tensor, 2> norms;  // per-position L2 norms, [1, H, W]
  std::array<Tensor, 2> normalized;
};

Tensor position_norms(const Tensor& f) {
  const int c = f.dim(0);
  const std::size_t plane = std::size_t(f.dim(1)) * f.dim(2);
  Tensor r({1, f.dim(1), f.dim(2)});
  for (std::size_t p = 0; p < plane; ++p) {
    double s = 0;
    for (int ch = 0; ch < c; ++ch) {
      const double v = f.data[ch * plane + p];
      s += v * v;
    }
    r.data[p] = static_cast<real>(std::sqrt(s));
  }
  return r;
}

Tensor normalize(const Tensor& f, const Tensor& norms) {
  const int c = f.dim(0);
  const std::size_t plane = std::size_t(f.dim(1)) * f.dim(2);
  Tensor n(f.shape);
  for (std::size_t p = 0; p < plane; ++p) {
    const real inv = real(1) / (norms.data[p] + PerceptualMetric::kNormEps);
    for (int ch = 0; ch < c; ++ch) n.data[ch * plane + p] = f.data[ch * plane + p] * inv;
  }
  return n;
}

// Adjoint of normalize() at f.
Tensor normalize_backward(const Tensor& f, const Tensor& norms, const Tensor& grad_n) {
  const int c = f.dim(0);
  const std::size_t plane = std::size_t(f.dim(1)) * f.dim(2);
  const double eps = PerceptualMetric::kNormEps;
  Tensor g(f.shape);
  for (std::size_t p = 0; p < plane; ++p) {
    const double r = norms.data[p];
    double dot = 0;
    for (int ch = 0; ch < c; ++ch) dot += double(grad_n.data[ch * plane + p]) * f.data[ch * plane + p];
    const double a = 1.0 / (r + eps);
    const double b = r > 0 ? dot / (r * (r + eps) * (r + eps)) : 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t i = ch * plane + p;
      g.data[i] = static_cast<real>(a * grad_n.data[i] - b * f.data[i]);
    }
  }
  return g;
}

ScaleTrace forward_scale(const std::array<ConvLayer, 2>& layers, const Tensor& image, int size) {
  ScaleTrace t;
  t.input = resize_bilinear(image, size, size);
  t.pre0 = conv2d_forward(layers[0], t.input);
  t.act0 = leaky_relu(t.pre0);
  t.pre1 = conv2d_forward(layers[1], t.act0);
  t.act1 = leaky_relu(t.pre1);
  t.norms[0] = position_norms(t.act0);
  t.norms[1] = position_norms(t.act1);
  t.normalized[0] = normalize(t.act0, t.norms[0]);
  t.normalized[1] = normalize(t.act1, t.norms[1]);
  return t;
}

// Spatial mean of the channel-summed squared difference.
double layer_term(const Tensor& na, const Tensor& nb) {
  const std::size_t plane = std::size_t(na.dim(1)) * na.dim(2);
  double s = 0;
  for (std::size_t i = 0; i < na.size(); ++i) {
    const double d = double(na.data[i]) - double(nb.data[i]);
    s += d * d;
  }
  return s / double(plane);
}

void require_image_tensor(const Tensor& t) {
  if (t.shape != std::vector<int>{3, kImageSize, kImageSize}) {
    throw ValidationError("perceptual distance expects 64x64 images");
  }
}

}  // namespace

PerceptualMetric::PerceptualMetric(const Autoencoder& ae, std::array<real, 2> layer_weights)
    : layers_{ae.encoder[0], ae.encoder[1]}, weights_(layer_weights) {}

PerceptualMetric::Reference PerceptualMetric::prepare(const Tensor& b) const {
  require_image_tensor(b);
  Reference ref;
  for (std::size_t s = 0; s < kScales.size(); ++s) {
    auto t = forward_scale(layers_, b, kScales[s]);
    ref.normalized[s] = {std::move(t.normalized[0]), std::move(t.normalized[1])};
  }
  return ref;
}

real PerceptualMetric::distance(const Tensor& a, const Reference& b) const {
  require_image_tensor(a);
  double total = 0;
  for (std::size_t s = 0; s < kScales.size(); ++s) {
    const auto t = forward_scale(layers_, a, kScales[s]);
    for (int l = 0; l < 2; ++l) total += double(weights_[l]) * layer_term(t.normalized[l], b.normalized[s][l]);
  }
  return static_cast<real>(total / double(kScales.size()));
}

real PerceptualMetric::value_and_gradient(const Tensor& a, const Reference& b, Tensor& grad) const {
  require_image_tensor(a);
  grad = Tensor(a.shape);
  double total = 0;
  const double inv_scales = 1.0 / double(kScales.size());
  for (std::size_t s = 0; s < kScales.size(); ++s) {
    const auto t = forward_scale(layers_, a, kScales[s]);
    std::array<Tensor, 2> grad_n;
    for (int l = 0; l < 2; ++l) {
      const Tensor& na = t.normalized[l];
      const Tensor& nb = b.normalized[s][l];
      total += double(weights_[l]) * layer_term(na, nb);
      const double plane = double(na.dim(1)) * na.dim(2);
      const double coeff = 2.0 * double(weights_[l]) * inv_scales / plane;
      grad_n[l] = Tensor(na.shape);
      for (std::size_t i = 0; i < na.size(); ++i) {
        grad_n[l].data[i] = static_cast<real>(coeff * (double(na.data[i]) - double(nb.data[i])));
      }
    }
    Tensor g1 = normalize_backward(t.act1, t.norms[1], grad_n[1]);
    g1 = leaky_relu_backward(t.pre1, g1);
    Tensor g0 = conv2d_backward_input(layers_[1], t.act0.shape, g1);
    const Tensor g0_direct = normalize_backward(t.act0, t.norms[0], grad_n[0]);
    for (std::size_t i = 0; i < g0.size(); ++i) g0.data[i] += g0_direct.data[i];
    g0 = leaky_relu_backward(t.pre0, g0);
    const Tensor g_in = conv2d_backward_input(layers_[0], t.input.shape, g0);
    const Tensor g_img = resize_bilinear_backward(g_in, kImageSize, kImageSize);
    for (std::size_t i = 0; i < grad.size(); ++i) grad.data[i] += g_img.data[i];
  }
  return static_cast<real>(total * inv_scales);
}

real pd(const PerceptualMetric& m, const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ValidationError("pd: dimension mismatch");
  return m.distance(image_to_tensor(a), m.prepare(image_to_tensor(b)));
}

Tensor pd_gradient(const PerceptualMetric& m, const Image& a, const Image& b_fixed) {
  if (!a.same_shape(b_fixed)) throw ValidationError("pd_gradient: dimension mismatch");
  Tensor grad;
  m.value_and_gradient(image_to_tensor(a), m.prepare(image_to_tensor(b_fixed)), grad);
  return grad;
}

std::vector<CalibrationRow> pd_calibration(const PerceptualMetric& m, std::span<const Image> images,
                                           std::span<const double> amplitudes, std::uint64_t seed) {
  if (images.empty()) throw ValidationError("pd_calibration: no images");
  std::vector<CalibrationRow> rows;
  for (std::size_t k = 0; k < amplitudes.size(); ++k) {
    const double a = amplitudes[k];
    if (!(a >= 0)) throw ValidationError("pd_calibration: amplitudes must be >= 0");
    Rng rng(derive_seed(seed, k));
    std::vector<double> values;
    for (const auto& x : images) {
      std::vector<real> px(x.pixels().begin(), x.pixels().end());
      for (real& v : px) v = static_cast<real>(double(v) + a * (2 * rng.uniform() - 1));
      values.push_back(pd(m, Image(x.width(), x.height(), std::move(px)), x));
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    CalibrationRow row{a, n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]), 0};
    for (double v : values) row.mean_pd += v;
    row.mean_pd /= double(n);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace glazelab
