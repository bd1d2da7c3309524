#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "glazelab/image.hpp"
#include "glazelab/perceptual.hpp"

namespace glazelab::inline GLAZELAB_ABI {

enum class TextureKind { none, stroke, stipple };

using Rgb = std::array<real, 3>;

struct StyleParams {
  std::vector<Rgb> palette;  // 4..8 colors
  real smoothness_sigma = 0;
  TextureKind texture_kind = TextureKind::none;
  real texture_amplitude = 0;  // [0, 0.3]
  std::uint64_t texture_seed = 0;

  // Throws ValidationError when a field is out of range.
  void validate() const;
  // texture_amplitude < 0.05 and smoothness_sigma >= 1.
  bool is_smooth() const;

  friend bool operator==(const StyleParams&, const StyleParams&) = default;
};

struct StylePreset {
  std::string name;
  StyleParams params;

  friend bool operator==(const StylePreset&, const StylePreset&) = default;
};

inline constexpr real kPaletteTemperature = real(0.08);

// Blur, soft palette remap, additive texture field, clamp.
Image stylize(const Image& x, const StyleParams& t);

// Unit max-abs texture field for the given kind and seed, 64x64, row-major.
std::vector<real> texture_field(TextureKind kind, std::uint64_t seed);

// Pool member maximizing pd(stylize(probe, artist), stylize(probe, candidate));
// ties go to the lowest index.
std::size_t select_target_style_index(const StyleParams& artist_style,
                                      std::span<const StyleParams> pool,
                                      const PerceptualMetric& metric, const Image& probe);
StyleParams select_target_style(const StyleParams& artist_style, std::span<const StyleParams> pool,
                                const PerceptualMetric& metric, const Image& probe);

// The six shipped presets: realism, romanticism (smooth); impasto, stipple,
// crosshatch, cubist-blocky (textured).
std::vector<StylePreset> default_styles();

std::vector<StylePreset> load_styles(const std::filesystem::path& path);
void save_styles(std::span<const StylePreset> styles, const std::filesystem::path& path);
std::string styles_to_json(std::span<const StylePreset> styles);
std::vector<StylePreset> styles_from_json(const std::string& text);

const StylePreset& find_style(std::span<const StylePreset> styles, const std::string& name);

std::string to_string(TextureKind kind);
TextureKind texture_kind_from_string(const std::string& s);

}  // namespace glazelab
