#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "glazelab/common.hpp"

namespace glazelab::inline GLAZELAB_ABI {

// H x W x 3 pixel grid, row-major, channel-interleaved, values in [0, 1].
// Immutable: every operation returns a new image.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;

  // Black image.
  Image(int width, int height);

  // Takes ownership of `pixels` and clamps them into [0, 1]. Throws
  // ValidationError on a size mismatch or a non-finite value.
  Image(int width, int height, std::vector<real> pixels);

  static Image filled(int width, int height, real r, real g, real b);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  std::span<const real> pixels() const { return pixels_; }

  real at(int x, int y, int c) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<real> pixels_;
};

enum class ImageFormat { ppm, imf };

// Binary PPM (P6, maxval 255) or IMF. The format is sniffed from the magic.
Image load_image(const std::filesystem::path& path);

void save_image(const Image& img, const std::filesystem::path& path,
                ImageFormat format);

// IMF serialization without touching the filesystem; also the canonical byte
// form used for hashing.
std::vector<unsigned char> encode_imf(const Image& img);
Image decode_imf(std::span<const unsigned char> bytes);

// Half-pixel-centered bilinear resampling.
Image resize_bilinear(const Image& img, int new_width, int new_height);

// Root-mean-square per-entry distance.
real pixel_l2(const Image& a, const Image& b);

// Separable Gaussian blur, radius ceil(3 sigma), weights renormalized over
// the in-bounds taps. sigma == 0 returns the input.
Image gaussian_blur(const Image& img, real sigma);

namespace detail {

// Source taps for output coordinate `out_index` under half-pixel-centered
// bilinear sampling: value = (1 - frac) * in[lo] + frac * in[hi].
struct BilinearTap {
  int lo;
  int hi;
  double frac;
};

BilinearTap bilinear_tap(int out_index, int in_size, int out_size);

}  // namespace detail

}  // namespace glazelab
