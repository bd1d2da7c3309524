#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "glazelab/autoencoder.hpp"
#include "glazelab/neural.hpp"
#include "glazelab/perceptual.hpp"
#include "glazelab/perturb.hpp"
#include "glazelab/style.hpp"

namespace glazelab::inline GLAZELAB_ABI::gradcheck {

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  for (real& v : t.data) v = static_cast<real>(lo + (hi - lo) * rng.uniform());
  return t;
}

ConvLayer random_layer(int in, int out, int stride, Rng& rng) {
  ConvLayer l(in, out, stride);
  for (real& w : l.weights.data) w = static_cast<real>(2 * rng.uniform() - 1);
  for (real& b : l.bias.data) b = static_cast<real>(2 * rng.uniform() - 1);
  return l;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a.data[i]) * double(b.data[i]);
  return s;
}

// Compares `analytic` against central differences of `f` along the listed
// coordinates of `x` (which is restored afterwards).
Check compare(const std::string& name, Tensor& x, const Tensor& analytic, const std::function<double()>& f,
              double h, const std::vector<std::size_t>& coords) {
  Check c{name, 0, 0};
  for (std::size_t k : coords) {
    const real saved = x.data[k];
    x.data[k] = static_cast<real>(double(saved) + h);
    const double up = f();
    x.data[k] = static_cast<real>(double(saved) - h);
    const double down = f();
    x.data[k] = saved;
    const double numeric = (up - down) / (2 * h);
    c.max_rel_error = std::max(c.max_rel_error, relative_error(double(analytic.data[k]), numeric));
    ++c.coordinates;
  }
  return c;
}

std::vector<std::size_t> every(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

std::vector<std::size_t> sample(std::size_t n, int count, Rng& rng) {
  std::vector<std::size_t> idx;
  for (int i = 0; i < count; ++i) idx.push_back(static_cast<std::size_t>(rng.next_u64() % n));
  return idx;
}

double definitional_conv(const ConvLayer& l, const Tensor& in, int o, int y, int x) {
  const int h = in.dim(1);
  const int w = in.dim(2);
  double s = l.bias.data[o];
  for (int i = 0; i < l.in_channels; ++i) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const int iy = y * l.stride + ky - 1;
        const int ix = x * l.stride + kx - 1;
        if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
        s += double(l.weights.data[((o * l.in_channels + i) * 3 + ky) * 3 + kx]) *
             double(in.data[(i * h + iy) * w + ix]);
      }
    }
  }
  return s;
}

struct ConvCase {
  int in, out, stride, h, w;
};

constexpr ConvCase kConvCases[] = {
    {1, 2, 1, 4, 4}, {2, 3, 1, 5, 6}, {3, 2, 2, 8, 8}, {4, 2, 2, 7, 5}, {2, 4, 2, 1, 3},
};

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double conv_forward_max_error(std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0;
  for (const auto& cc : kConvCases) {
    const ConvLayer l = random_layer(cc.in, cc.out, cc.stride, rng);
    const Tensor in = random_tensor({cc.in, cc.h, cc.w}, rng);
    const Tensor out = conv2d_forward(l, in);
    const int oh = (cc.h + cc.stride - 1) / cc.stride;
    const int ow = (cc.w + cc.stride - 1) / cc.stride;
    if (out.shape != std::vector<int>{cc.out, oh, ow}) return INFINITY;
    for (int o = 0; o < cc.out; ++o) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          worst = std::max(worst, std::abs(double(out.data[(o * oh + y) * ow + x]) - definitional_conv(l, in, o, y, x)));
        }
      }
    }
  }
  return worst;
}

std::vector<Check> conv_checks(const Settings& s) {
  Rng rng(s.seed);
  std::vector<Check> out;
  for (const auto& cc : kConvCases) {
    ConvLayer l = random_layer(cc.in, cc.out, cc.stride, rng);
    Tensor in = random_tensor({cc.in, cc.h, cc.w}, rng);
    const Tensor probe = random_tensor(conv2d_forward(l, in).shape, rng);
    const ConvGrads g = conv2d_backward(l, in, probe);
    auto loss = [&] { return dot(conv2d_forward(l, in), probe); };
    const std::string tag = "conv " + std::to_string(cc.in) + "->" + std::to_string(cc.out) + " s" +
                            std::to_string(cc.stride) + " " + std::to_string(cc.h) + "x" + std::to_string(cc.w);
    out.push_back(compare(tag + " input", in, g.input, loss, s.h, every(in.size())));
    out.push_back(compare(tag + " weights", l.weights, g.weights, loss, s.h, every(l.weights.size())));
    out.push_back(compare(tag + " bias", l.bias, g.bias, loss, s.h, every(l.bias.size())));
    Check ic{tag + " input-only path", 0, in.size()};
    const Tensor gi = conv2d_backward_input(l, in.shape, probe);
    for (std::size_t i = 0; i < gi.size(); ++i) {
      ic.max_rel_error = std::max(ic.max_rel_error, relative_error(gi.data[i], g.input.data[i]));
    }
    out.push_back(ic);
  }
  return out;
}

std::vector<Check> activation_checks(const Settings& s) {
  Rng rng(s.seed + 1);
  std::vector<Check> out;
  {
    Tensor x = random_tensor({4, 8, 8}, rng);
    const Tensor probe = random_tensor(x.shape, rng);
    const Tensor g = leaky_relu_backward(x, probe);
    std::vector<std::size_t> away_from_kink;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (std::abs(double(x.data[i])) > std::max(1e-6, 2 * s.h)) away_from_kink.push_back(i);
    }
    out.push_back(compare("leaky_relu", x, g, [&] { return dot(leaky_relu(x), probe); }, s.h, away_from_kink));
  }
  {
    Tensor x = random_tensor({3, 6, 6}, rng, -4, 4);
    const Tensor probe = random_tensor(x.shape, rng);
    const Tensor g = sigmoid_backward(sigmoid(x), probe);
    out.push_back(compare("sigmoid", x, g, [&] { return dot(sigmoid(x), probe); }, s.h, every(x.size())));
  }
  {
    Tensor x = random_tensor({2, 4, 5}, rng);
    const Tensor probe = random_tensor({2, 8, 10}, rng);
    const Tensor g = upsample2x_backward(probe);
    out.push_back(compare("upsample2x", x, g, [&] { return dot(upsample2x(x), probe); }, s.h, every(x.size())));
  }
  for (auto [oh, ow] : {std::pair{3, 4}, std::pair{10, 14}, std::pair{5, 7}}) {
    Tensor x = random_tensor({2, 5, 7}, rng);
    const Tensor probe = random_tensor({2, oh, ow}, rng);
    const Tensor g = resize_bilinear_backward(probe, 5, 7);
    out.push_back(compare("resize_bilinear 5x7->" + std::to_string(oh) + "x" + std::to_string(ow), x, g,
                          [&] { return dot(resize_bilinear(x, oh, ow), probe); }, s.h, every(x.size())));
  }
  return out;
}

Check perceptual_check(const Settings& s) {
  Rng rng(s.seed + 2);
  const Autoencoder ae = Autoencoder::he_initialized(rng);
  const PerceptualMetric m(ae);
  Tensor a = random_tensor({3, kImageSize, kImageSize}, rng, 0.1, 0.9);
  const Tensor b = random_tensor({3, kImageSize, kImageSize}, rng, 0.1, 0.9);
  const auto ref = m.prepare(b);
  Tensor g;
  m.value_and_gradient(a, ref, g);
  return compare("perceptual distance", a, g, [&] { return double(m.distance(a, ref)); }, s.objective_h,
                 sample(a.size(), s.sampled, rng));
}

std::vector<Check> objective_checks(const Settings& s) {
  Rng rng(s.seed + 3);
  const Autoencoder ae = Autoencoder::he_initialized(rng);
  const PerceptualMetric m(ae);
  auto random_image = [&] {
    std::vector<real> px(std::size_t(kImageSize) * kImageSize * 3);
    for (real& v : px) v = static_cast<real>(0.15 + 0.7 * rng.uniform());
    return Image(kImageSize, kImageSize, std::move(px));
  };
  const Image x = random_image();
  const StyleParams target = default_styles()[2].params;
  std::vector<Check> out;
  // A tiny budget keeps the penalty active; a huge one isolates the primary term.
  for (const auto& [label, budget] : {std::pair{"penalty active", real(1e-5)}, std::pair{"feasible", real(10)}}) {
    const real alpha = 10;
    {
      const CloakObjective obj(x, target, ae, m, budget);
      Tensor delta = random_tensor(obj.input().shape, rng, -0.05, 0.05);
      const ObjectiveValue v = obj.evaluate(delta, alpha, true);
      out.push_back(compare(std::string("cloak objective (") + label + ")", delta, v.gradient,
                            [&] { return double(obj.evaluate(delta, alpha, false).total); }, s.objective_h,
                            sample(delta.size(), s.sampled, rng)));
    }
    {
      const PurifyObjective obj(x, ae, m, budget);
      Tensor delta = random_tensor(obj.input().shape, rng, -0.05, 0.05);
      const ObjectiveValue v = obj.evaluate(delta, alpha, true);
      out.push_back(compare(std::string("purify objective (") + label + ")", delta, v.gradient,
                            [&] { return double(obj.evaluate(delta, alpha, false).total); }, s.objective_h,
                            sample(delta.size(), s.sampled, rng)));
    }
  }
  return out;
}

std::vector<Check> all_checks(const Settings& s) {
  std::vector<Check> out = conv_checks(s);
  for (auto& c : activation_checks(s)) out.push_back(std::move(c));
  out.push_back(perceptual_check(s));
  for (auto& c : objective_checks(s)) out.push_back(std::move(c));
  return out;
}

}  // namespace glazelab::gradcheck
