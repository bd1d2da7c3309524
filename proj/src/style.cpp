#include "glazelab/style.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "glazelab/neural.hpp"
#include "json.hpp"

namespace glazelab::inline GLAZELAB_ABI {

using json = nlohmann::json;

namespace {

constexpr int kSide = kImageSize;

// Two oriented sinusoid bands with seed-drawn angle, frequency and phase.
std::vector<real> stroke_field(Rng& rng) {
  std::vector<double> f(kSide * kSide, 0.0);
  for (int band = 0; band < 2; ++band) {
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    const double freq = 0.18 + 0.14 * rng.uniform();  // cycles per pixel
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    const double cx = std::cos(theta);
    const double sy = std::sin(theta);
    for (int y = 0; y < kSide; ++y) {
      for (int x = 0; x < kSide; ++x) {
        f[y * kSide + x] += std::sin(2.0 * std::numbers::pi * freq * (x * cx + y * sy) + phase);
      }
    }
  }
  std::vector<real> out(f.size());
  double peak = 0;
  for (double v : f) peak = std::max(peak, std::abs(v));
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = static_cast<real>(peak > 0 ? f[i] / peak : 0.0);
  return out;
}

// Thresholded white noise, blurred with sigma 0.5, centered.
std::vector<real> stipple_field(Rng& rng) {
  std::vector<real> dots(kSide * kSide * 3);
  for (int i = 0; i < kSide * kSide; ++i) {
    const real v = rng.uniform() > 0.75 ? real(1) : real(0);
    dots[i * 3] = dots[i * 3 + 1] = dots[i * 3 + 2] = v;
  }
  const Image blurred = gaussian_blur(Image(kSide, kSide, std::move(dots)), real(0.5));
  double mean = 0;
  for (int i = 0; i < kSide * kSide; ++i) mean += blurred.pixels()[i * 3];
  mean /= double(kSide * kSide);
  std::vector<double> f(kSide * kSide);
  double peak = 0;
  for (int i = 0; i < kSide * kSide; ++i) {
    f[i] = blurred.pixels()[i * 3] - mean;
    peak = std::max(peak, std::abs(f[i]));
  }
  std::vector<real> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = static_cast<real>(peak > 0 ? f[i] / peak : 0.0);
  return out;
}

void require_size(const Image& x) {
  if (x.width() != kSide || x.height() != kSide) throw ValidationError("stylize expects a 64x64 image");
}

// Presets are authored with six decimals; print them that way.
double tidy(real v) { return std::round(double(v) * 1e6) / 1e6; }

}  // namespace

void StyleParams::validate() const {
  if (palette.size() < 4 || palette.size() > 8) throw ValidationError("palette must have 4-8 colors");
  for (const auto& c : palette) {
    for (real v : c) {
      if (!(v >= 0 && v <= 1)) throw ValidationError("palette color outside [0, 1]");
    }
  }
  if (!(smoothness_sigma >= 0) || !std::isfinite(smoothness_sigma)) {
    throw ValidationError("smoothness_sigma must be finite and >= 0");
  }
  if (!(texture_amplitude >= 0 && texture_amplitude <= real(0.3))) {
    throw ValidationError("texture_amplitude must lie in [0, 0.3]");
  }
}

bool StyleParams::is_smooth() const { return texture_amplitude < real(0.05) && smoothness_sigma >= real(1); }

std::vector<real> texture_field(TextureKind kind, std::uint64_t seed) {
  Rng rng(seed);
  switch (kind) {
    case TextureKind::stroke:
      return stroke_field(rng);
    case TextureKind::stipple:
      return stipple_field(rng);
    case TextureKind::none:
      break;
  }
  return std::vector<real>(kSide * kSide, real(0));
}

Image stylize(const Image& x, const StyleParams& t) {
  require_size(x);
  t.validate();
  const Image blurred = gaussian_blur(x, t.smoothness_sigma);
  const auto px = blurred.pixels();
  std::vector<real> out(px.size());
  std::vector<double> weights(t.palette.size());
  for (std::size_t i = 0; i < px.size(); i += 3) {
    double best = INFINITY;
    for (std::size_t k = 0; k < t.palette.size(); ++k) {
      double d2 = 0;
      for (int c = 0; c < 3; ++c) {
        const double d = double(px[i + c]) - double(t.palette[k][c]);
        d2 += d * d;
      }
      weights[k] = d2;
      best = std::min(best, d2);
    }
    double norm = 0;
    for (double& w : weights) {
      w = std::exp(-(w - best) / double(kPaletteTemperature));
      norm += w;
    }
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (std::size_t k = 0; k < t.palette.size(); ++k) acc += weights[k] * double(t.palette[k][c]);
      out[i + c] = static_cast<real>(acc / norm);
    }
  }
  if (t.texture_kind != TextureKind::none && t.texture_amplitude > 0) {
    const auto field = texture_field(t.texture_kind, t.texture_seed);
    for (std::size_t p = 0; p < field.size(); ++p) {
      for (int c = 0; c < 3; ++c) out[p * 3 + c] += t.texture_amplitude * field[p];
    }
  }
  return Image(kSide, kSide, std::move(out));  // clamps
}

std::size_t select_target_style_index(const StyleParams& artist_style,
                                      std::span<const StyleParams> pool,
                                      const PerceptualMetric& metric, const Image& probe) {
  if (pool.empty()) throw ValidationError("select_target_style: empty pool");
  const Image own = stylize(probe, artist_style);
  const auto ref = metric.prepare(image_to_tensor(own));
  std::size_t best = 0;
  real best_distance = -1;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const real d = metric.distance(image_to_tensor(stylize(probe, pool[i])), ref);
    if (d > best_distance) {
      best_distance = d;
      best = i;
    }
  }
  return best;
}

StyleParams select_target_style(const StyleParams& artist_style, std::span<const StyleParams> pool,
                                const PerceptualMetric& metric, const Image& probe) {
  return pool[select_target_style_index(artist_style, pool, metric, probe)];
}

std::vector<StylePreset> default_styles() {
  using K = TextureKind;
  return {
      {"realism",
       {{{0.25f, 0.35f, 0.20f}, {0.45f, 0.55f, 0.30f}, {0.62f, 0.50f, 0.35f}, {0.78f, 0.74f, 0.60f},
         {0.35f, 0.30f, 0.25f}, {0.55f, 0.66f, 0.76f}},
        1.5f, K::none, 0.0f, 11}},
      {"romanticism",
       {{{0.08f, 0.16f, 0.32f}, {0.20f, 0.40f, 0.60f}, {0.86f, 0.68f, 0.42f}, {0.96f, 0.90f, 0.74f},
         {0.42f, 0.56f, 0.66f}},
        2.0f, K::none, 0.0f, 12}},
      {"impasto",
       {{{0.86f, 0.30f, 0.14f}, {0.96f, 0.76f, 0.18f}, {0.18f, 0.50f, 0.30f}, {0.14f, 0.24f, 0.62f},
         {0.92f, 0.92f, 0.82f}},
        0.0f, K::stroke, 0.15f, 13}},
      {"stipple",
       {{{0.96f, 0.86f, 0.90f}, {0.60f, 0.80f, 0.92f}, {0.90f, 0.58f, 0.70f}, {0.70f, 0.90f, 0.68f}},
        0.0f, K::stipple, 0.20f, 14}},
      {"crosshatch",
       {{{0.10f, 0.10f, 0.12f}, {0.40f, 0.38f, 0.35f}, {0.70f, 0.68f, 0.62f}, {0.95f, 0.93f, 0.88f}},
        0.5f, K::stroke, 0.15f, 15}},
      {"cubist-blocky",
       {{{0.56f, 0.44f, 0.28f}, {0.34f, 0.30f, 0.24f}, {0.72f, 0.62f, 0.40f}, {0.50f, 0.52f, 0.50f},
         {0.24f, 0.36f, 0.42f}},
        0.0f, K::stroke, 0.12f, 16}},
  };
}

std::string to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::none:
      return "none";
    case TextureKind::stroke:
      return "stroke";
    case TextureKind::stipple:
      return "stipple";
  }
  return "none";
}

TextureKind texture_kind_from_string(const std::string& s) {
  if (s == "none") return TextureKind::none;
  if (s == "stroke") return TextureKind::stroke;
  if (s == "stipple") return TextureKind::stipple;
  throw ValidationError("unknown texture_kind '" + s + "'");
}

std::string styles_to_json(std::span<const StylePreset> styles) {
  json doc;
  doc["styles"] = json::array();
  for (const auto& s : styles) {
    json palette = json::array();
    for (const auto& c : s.params.palette) palette.push_back({tidy(c[0]), tidy(c[1]), tidy(c[2])});
    doc["styles"].push_back({{"name", s.name},
                             {"palette", palette},
                             {"smoothness_sigma", tidy(s.params.smoothness_sigma)},
                             {"texture_kind", to_string(s.params.texture_kind)},
                             {"texture_amplitude", tidy(s.params.texture_amplitude)},
                             {"texture_seed", s.params.texture_seed}});
  }
  return doc.dump(2) + "\n";
}

std::vector<StylePreset> styles_from_json(const std::string& text) {
  std::vector<StylePreset> out;
  try {
    const json doc = json::parse(text);
    for (const auto& item : doc.at("styles")) {
      StylePreset p;
      p.name = item.at("name").get<std::string>();
      for (const auto& c : item.at("palette")) {
        if (c.size() != 3) throw ValidationError("palette entries must be RGB triples");
        p.params.palette.push_back({c[0].get<real>(), c[1].get<real>(), c[2].get<real>()});
      }
      p.params.smoothness_sigma = item.at("smoothness_sigma").get<real>();
      p.params.texture_kind = texture_kind_from_string(item.at("texture_kind").get<std::string>());
      p.params.texture_amplitude = item.at("texture_amplitude").get<real>();
      p.params.texture_seed = item.at("texture_seed").get<std::uint64_t>();
      p.params.validate();
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed styles document: ") + e.what());
  }
  if (out.empty()) throw ValidationError("styles document lists no styles");
  return out;
}

std::vector<StylePreset> load_styles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open styles file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return styles_from_json(ss.str());
}

void save_styles(std::span<const StylePreset> styles, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write styles file: " + path.string());
  out << styles_to_json(styles);
}

const StylePreset& find_style(std::span<const StylePreset> styles, const std::string& name) {
  for (const auto& s : styles) {
    if (s.name == name) return s;
  }
  throw ValidationError("unknown style '" + name + "'");
}

}  // namespace glazelab
