#include "glazelab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "glazelab/parallel.hpp"

namespace glazelab::inline GLAZELAB_ABI {

namespace {

// Single-channel plane of doubles.
struct Plane {
  int w = 0;
  int h = 0;
  std::vector<double> v;

  double at(int x, int y) const {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return v[std::size_t(y) * w + x];
  }
};

constexpr double kBinomial[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

// Binomial blur then keep even samples.
Plane reduce(const Plane& p) {
  Plane tmp{p.w, p.h, std::vector<double>(p.v.size())};
  for (int y = 0; y < p.h; ++y) {
    for (int x = 0; x < p.w; ++x) {
      double s = 0;
      for (int k = -2; k <= 2; ++k) s += kBinomial[k + 2] * p.at(x + k, y);
      tmp.v[std::size_t(y) * p.w + x] = s;
    }
  }
  Plane out{(p.w + 1) / 2, (p.h + 1) / 2, {}};
  out.v.resize(std::size_t(out.w) * out.h);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      double s = 0;
      for (int k = -2; k <= 2; ++k) s += kBinomial[k + 2] * tmp.at(2 * x, 2 * y + k);
      out.v[std::size_t(y) * out.w + x] = s;
    }
  }
  return out;
}

// 1-D expansion of zero-insertion followed by the binomial filter (x2 gain):
// even outputs (v[i-1] + 6 v[i] + v[i+1]) / 8, odd outputs (v[i] + v[i+1]) / 2.
double expand_1d(const Plane& p, int ox, int y) {
  const int i = ox / 2;
  if (ox % 2 == 0) return (p.at(i - 1, y) + 6.0 * p.at(i, y) + p.at(i + 1, y)) / 8.0;
  return (p.at(i, y) + p.at(i + 1, y)) / 2.0;
}

Plane expand(const Plane& p, int w, int h) {
  Plane tmp{w, p.h, std::vector<double>(std::size_t(w) * p.h)};
  for (int y = 0; y < p.h; ++y) {
    for (int x = 0; x < w; ++x) tmp.v[std::size_t(y) * w + x] = expand_1d(p, x, y);
  }
  Plane out{w, h, std::vector<double>(std::size_t(w) * h)};
  for (int y = 0; y < h; ++y) {
    const int i = y / 2;
    for (int x = 0; x < w; ++x) {
      out.v[std::size_t(y) * w + x] =
          (y % 2 == 0) ? (tmp.at(x, i - 1) + 6.0 * tmp.at(x, i) + tmp.at(x, i + 1)) / 8.0
                       : (tmp.at(x, i) + tmp.at(x, i + 1)) / 2.0;
    }
  }
  return out;
}

double finest_band(std::span<const real> values, int width, int height) {
  return band_energies(values, width, height)[0];
}

std::vector<real> difference(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ValidationError("image dimension mismatch");
  std::vector<real> d(a.size());
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = pb[i] - pa[i];
  return d;
}

// Forward pass of the genre classifier, keeping what backward needs.
struct GenreTrace {
  std::array<Tensor, 3> inputs;
  std::array<Tensor, 3> pre;
  std::vector<real> pooled;
  std::vector<real> logits;
};

GenreTrace genre_forward(const GenreClassifier& clf, const Tensor& x) {
  GenreTrace t;
  Tensor h = x;
  for (int i = 0; i < 3; ++i) {
    t.inputs[i] = h;
    t.pre[i] = conv2d_forward(clf.convs[i], h);
    h = leaky_relu(t.pre[i]);
  }
  const int c = h.dim(0);
  const std::size_t plane = std::size_t(h.dim(1)) * h.dim(2);
  t.pooled.assign(c, 0);
  for (int ch = 0; ch < c; ++ch) {
    double s = 0;
    for (std::size_t p = 0; p < plane; ++p) s += h.data[ch * plane + p];
    t.pooled[ch] = static_cast<real>(s / double(plane));
  }
  const int g = clf.dense_bias.dim(0);
  t.logits.assign(g, 0);
  for (int k = 0; k < g; ++k) {
    double s = clf.dense_bias.data[k];
    for (int ch = 0; ch < c; ++ch) s += double(clf.dense_weights.data[k * c + ch]) * t.pooled[ch];
    t.logits[k] = static_cast<real>(s);
  }
  return t;
}

struct GenreGrads {
  std::array<ConvGrads, 3> convs;
  std::vector<real> dense_w;
  std::vector<real> dense_b;
  double loss = 0;
};

GenreGrads genre_gradients(const GenreClassifier& clf, const Tensor& x, int label) {
  const GenreTrace t = genre_forward(clf, x);
  GenreGrads g;
  const int genres = static_cast<int>(t.logits.size());
  const int c = static_cast<int>(t.pooled.size());
  const double mx = *std::max_element(t.logits.begin(), t.logits.end());
  double z = 0;
  for (real l : t.logits) z += std::exp(double(l) - mx);
  g.loss = -(double(t.logits[label]) - mx - std::log(z));
  std::vector<real> dlogit(genres);
  for (int k = 0; k < genres; ++k) {
    dlogit[k] = static_cast<real>(std::exp(double(t.logits[k]) - mx) / z - (k == label ? 1.0 : 0.0));
  }
  g.dense_b = dlogit;
  g.dense_w.assign(std::size_t(genres) * c, 0);
  std::vector<real> dpool(c, 0);
  for (int k = 0; k < genres; ++k) {
    for (int ch = 0; ch < c; ++ch) {
      g.dense_w[k * c + ch] = dlogit[k] * t.pooled[ch];
      dpool[ch] += dlogit[k] * clf.dense_weights.data[k * c + ch];
    }
  }
  const Tensor& last = t.pre[2];
  const std::size_t plane = std::size_t(last.dim(1)) * last.dim(2);
  Tensor grad(last.shape);
  for (int ch = 0; ch < c; ++ch) {
    const real v = dpool[ch] / static_cast<real>(plane);
    std::fill(grad.data.begin() + ch * plane, grad.data.begin() + (ch + 1) * plane, v);
  }
  for (int i = 2; i >= 0; --i) {
    grad = leaky_relu_backward(t.pre[i], grad);
    g.convs[i] = conv2d_backward(clf.convs[i], t.inputs[i], grad);
    grad = g.convs[i].input;
  }
  return g;
}

}  // namespace

std::array<double, 4> band_energies(std::span<const real> values, int width, int height) {
  if (values.size() != std::size_t(width) * height * 3) throw ValidationError("band_energies: size mismatch");
  std::array<double, 4> energy{};
  for (int c = 0; c < 3; ++c) {
    Plane g{width, height, std::vector<double>(std::size_t(width) * height)};
    for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] = values[i * 3 + c];
    for (int level = 0; level < 4; ++level) {
      const Plane down = reduce(g);
      const Plane up = expand(down, g.w, g.h);
      double s = 0;
      for (std::size_t i = 0; i < g.v.size(); ++i) s += std::abs(g.v[i] - up.v[i]);
      energy[level] += s / double(g.v.size());
      g = down;
    }
  }
  for (double& e : energy) e /= 3.0;
  return energy;
}

std::array<double, 4> band_energies(const Image& img) {
  return band_energies(img.pixels(), img.width(), img.height());
}

double texture_retention(const Image& original, const Image& processed) {
  if (!original.same_shape(processed)) throw ValidationError("texture_retention: dimension mismatch");
  return band_energies(processed)[0] / (band_energies(original)[0] + 1e-10);
}

double artifact_energy(const Image& original, const Image& processed) {
  const auto d = difference(original, processed);
  return finest_band(d, original.width(), original.height());
}

StyleSignature style_signature(const Autoencoder& ae, std::span<const Image> images) {
  if (images.empty()) throw ValidationError("style_signature: empty image list");
  StyleSignature sig;
  sig.color_hist.assign(kColorBins, 0.0);
  sig.latent_mean.assign(ae.latent_size(), 0.0);
  std::size_t pixels = 0;
  for (const auto& img : images) {
    const auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); i += 3) {
      int bin = 0;
      for (int c = 0; c < 3; ++c) {
        const int b = std::min(kColorBinsPerChannel - 1, static_cast<int>(px[i + c] * kColorBinsPerChannel));
        bin = bin * kColorBinsPerChannel + b;
      }
      sig.color_hist[bin] += 1.0;
    }
    pixels += px.size() / 3;
    const auto bands = band_energies(img);
    for (int k = 0; k < 4; ++k) sig.texture_spectrum[k] += bands[k];
    const Latent z = encode(ae, img);
    for (std::size_t i = 0; i < z.values.size(); ++i) sig.latent_mean[i] += z.values[i];
  }
  for (double& h : sig.color_hist) h /= double(pixels);
  for (double& t : sig.texture_spectrum) t /= double(images.size());
  for (double& z : sig.latent_mean) z /= double(images.size());
  return sig;
}

SignatureDistance signature_distance_parts(const StyleSignature& a, const StyleSignature& b) {
  if (a.color_hist.size() != b.color_hist.size() || a.latent_mean.size() != b.latent_mean.size()) {
    throw ValidationError("signature_distance: dimension mismatch");
  }
  SignatureDistance d;
  for (std::size_t i = 0; i < a.color_hist.size(); ++i) d.color += std::abs(a.color_hist[i] - b.color_hist[i]);
  double t2 = 0;
  for (int k = 0; k < 4; ++k) {
    const double diff = a.texture_spectrum[k] - b.texture_spectrum[k];
    t2 += diff * diff;
  }
  d.texture = std::sqrt(t2);
  // 1 - cos(a, b) written as half the squared distance of the unit vectors,
  // which is exactly zero for identical inputs.
  auto norm = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  const double na = norm(a.latent_mean);
  const double nb = norm(b.latent_mean);
  if (na > 0 && nb > 0) {
    double s = 0;
    for (std::size_t i = 0; i < a.latent_mean.size(); ++i) {
      const double diff = a.latent_mean[i] / na - b.latent_mean[i] / nb;
      s += diff * diff;
    }
    d.latent = 0.5 * s;
  } else {
    d.latent = (na == nb) ? 0.0 : 1.0;
  }
  d.total = kColorWeight * d.color + kTextureWeight * d.texture + kLatentWeight * d.latent;
  return d;
}

double signature_distance(const StyleSignature& a, const StyleSignature& b) {
  return signature_distance_parts(a, b).total;
}

SignatureDistance mimic_score(const Autoencoder& ae, std::span<const Image> train_images,
                              std::span<const Image> holdout_originals) {
  if (train_images.empty() || holdout_originals.empty()) throw ValidationError("mimic_score: empty input");
  return signature_distance_parts(style_signature(ae, train_images), style_signature(ae, holdout_originals));
}

std::vector<real> GenreClassifier::logits(const Image& img) const {
  if (img.width() != kImageSize || img.height() != kImageSize) {
    throw ValidationError("genre classifier expects 64x64 images");
  }
  return genre_forward(*this, image_to_tensor(img)).logits;
}

int GenreClassifier::predict(const Image& img) const {
  const auto l = logits(img);
  return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
}

GenreClassifier train_genre_classifier(std::span<const Image> images, std::span<const int> labels,
                                       std::vector<std::string> label_names,
                                       const GenreTrainConfig& cfg, Rng& rng) {
  if (images.size() != labels.size() || images.empty()) {
    throw ValidationError("train_genre_classifier: images and labels must be nonempty and aligned");
  }
  const int genres = static_cast<int>(label_names.size());
  if (genres < 2) throw ValidationError("train_genre_classifier: need at least 2 genres");
  std::vector<bool> present(genres, false);
  for (int l : labels) {
    if (l < 0 || l >= genres) throw ValidationError("label outside the genre set");
    present[l] = true;
  }
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw ValidationError("train_genre_classifier: fewer than 2 genres present");
  }

  GenreClassifier clf;
  clf.labels = std::move(label_names);
  clf.convs = {he_init(ConvLayer(3, 8, 2), rng), he_init(ConvLayer(8, 16, 2), rng),
               he_init(ConvLayer(16, 32, 2), rng)};
  clf.dense_weights = Tensor({genres, 32});
  const auto normals = rng_normal(rng, clf.dense_weights.size());
  for (std::size_t i = 0; i < normals.size(); ++i) {
    clf.dense_weights.data[i] = static_cast<real>(normals[i] * std::sqrt(1.0 / 32.0));
  }
  clf.dense_bias = Tensor({genres});

  std::vector<Tensor> inputs;
  for (const auto& img : images) inputs.push_back(image_to_tensor(img));

  std::vector<real*> blocks;
  std::vector<std::size_t> sizes;
  for (auto& l : clf.convs) {
    blocks.push_back(l.weights.data.data());
    sizes.push_back(l.weights.size());
    blocks.push_back(l.bias.data.data());
    sizes.push_back(l.bias.size());
  }
  blocks.push_back(clf.dense_weights.data.data());
  sizes.push_back(clf.dense_weights.size());
  blocks.push_back(clf.dense_bias.data.data());
  sizes.push_back(clf.dense_bias.size());
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t(0));
  std::vector<real> params(total), grads(total);
  AdamState state(total);
  const AdamConfig adam{cfg.lr};

  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_u64() % i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t count = std::min<std::size_t>(cfg.batch, order.size() - start);
      std::fill(grads.begin(), grads.end(), real(0));
      const real scale = real(1) / real(count);
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = order[start + k];
        const GenreGrads g = genre_gradients(clf, inputs[idx], labels[idx]);
        if (!std::isfinite(g.loss)) throw NumericalError("genre classifier training diverged");
        std::size_t off = 0;
        for (const auto& cg : g.convs) {
          for (real v : cg.weights.data) grads[off++] += scale * v;
          for (real v : cg.bias.data) grads[off++] += scale * v;
        }
        for (real v : g.dense_w) grads[off++] += scale * v;
        for (real v : g.dense_b) grads[off++] += scale * v;
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
  }
  return clf;
}

double genre_accuracy(const GenreClassifier& clf, std::span<const Image> images, std::span<const int> labels) {
  if (images.size() != labels.size() || images.empty()) {
    throw ValidationError("genre_accuracy: images and labels must be nonempty and aligned");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= static_cast<int>(clf.labels.size())) {
      throw ValidationError("label outside the genre set");
    }
    if (clf.predict(images[i]) == labels[i]) ++correct;
  }
  return double(correct) / double(images.size());
}

SampleStats sample_stats(std::span<const double> values) {
  SampleStats s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= double(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / double(values.size() - 1));
  }
  return s;
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
  const auto sa = sample_stats(a);
  const auto sb = sample_stats(b);
  const double na = double(a.size());
  const double nb = double(b.size());
  const double dof = na + nb - 2;
  const double pooled =
      dof > 0 ? std::sqrt(((na - 1) * sa.sd * sa.sd + (nb - 1) * sb.sd * sb.sd) / dof) : 0.0;
  if (pooled == 0) {
    if (sa.mean == sb.mean) return 0.0;
    return sb.mean > sa.mean ? INFINITY : -INFINITY;
  }
  return (sb.mean - sa.mean) / pooled;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

GapReport gap_report(const Autoencoder& ae, std::span<const Image> clean, std::span<const Image> treated,
                     int jobs) {
  if (clean.empty() || treated.empty()) throw ValidationError("gap_report: empty population");
  GapReport r;
  r.clean.resize(clean.size());
  r.treated.resize(treated.size());
  parallel_for(clean.size(), jobs, [&](std::size_t i) { r.clean[i] = reconstruction_gap(ae, clean[i]); });
  parallel_for(treated.size(), jobs, [&](std::size_t i) { r.treated[i] = reconstruction_gap(ae, treated[i]); });
  const auto sc = sample_stats(r.clean);
  const auto st = sample_stats(r.treated);
  r.mean_clean = sc.mean;
  r.sd_clean = sc.sd;
  r.mean_treated = st.mean;
  r.sd_treated = st.sd;
  r.cohens_d = cohens_d(r.clean, r.treated);
  return r;
}

std::string GapReport::to_csv() const {
  std::ostringstream out;
  out.precision(9);
  out << "image_id,population,gap\n";
  for (std::size_t i = 0; i < clean.size(); ++i) out << i << ",clean," << clean[i] << "\n";
  for (std::size_t i = 0; i < treated.size(); ++i) out << i << ",treated," << treated[i] << "\n";
  return out.str();
}

}  // namespace glazelab
