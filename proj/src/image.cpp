#include "glazelab/image.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace glazelab::inline GLAZELAB_ABI {

namespace {

void check_dimensions(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw ValidationError("image dimensions must be positive, got " +
                          std::to_string(width) + "x" + std::to_string(height));
  }
}

real clamp01(real v) { return std::clamp(v, real(0), real(1)); }

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const unsigned char> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[offset + i]) << (8 * i);
  return v;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open image file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path,
                std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write image file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("short write: " + path.string());
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::span<const unsigned char> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) {
    token.push_back(static_cast<char>(bytes[pos++]));
  }
  return token;
}

int parse_header_int(const std::string& token, const char* what) {
  if (token.empty() ||
      !std::all_of(token.begin(), token.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw ValidationError(std::string("malformed PPM header: bad ") + what);
  }
  if (token.size() > 9) throw ValidationError(std::string("PPM ") + what + " too large");
  return std::stoi(token);
}

Image decode_ppm(std::span<const unsigned char> bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw ValidationError("malformed PPM header: expected P6");
  const int width = parse_header_int(next_token(bytes, pos), "width");
  const int height = parse_header_int(next_token(bytes, pos), "height");
  const int maxval = parse_header_int(next_token(bytes, pos), "maxval");
  if (maxval != 255) throw ValidationError("unsupported PPM maxval " + std::to_string(maxval));
  check_dimensions(width, height);
  // exactly one whitespace byte separates the header from the payload
  if (pos >= bytes.size()) throw ValidationError("PPM payload missing");
  ++pos;
  const std::size_t count = std::size_t(width) * height * 3;
  if (bytes.size() - pos < count) throw ValidationError("PPM payload shorter than header promises");
  std::vector<real> pixels(count);
  for (std::size_t i = 0; i < count; ++i) pixels[i] = real(bytes[pos + i]) / real(255);
  return Image(width, height, std::move(pixels));
}

}  // namespace

Image::Image(int width, int height) : width_(width), height_(height) {
  check_dimensions(width, height);
  pixels_.assign(std::size_t(width) * height * kChannels, real(0));
}

Image::Image(int width, int height, std::vector<real> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  check_dimensions(width, height);
  if (pixels_.size() != std::size_t(width) * height * kChannels) {
    throw ValidationError("pixel count does not match " + std::to_string(width) + "x" +
                          std::to_string(height) + "x3");
  }
  for (real& v : pixels_) {
    if (!std::isfinite(v)) throw ValidationError("non-finite pixel value");
    v = clamp01(v);
  }
}

Image Image::filled(int width, int height, real r, real g, real b) {
  check_dimensions(width, height);
  std::vector<real> pixels(std::size_t(width) * height * kChannels);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = r;
    pixels[i + 1] = g;
    pixels[i + 2] = b;
  }
  return Image(width, height, std::move(pixels));
}

std::vector<unsigned char> encode_imf(const Image& img) {
  std::vector<unsigned char> out;
  out.reserve(16 + img.size() * 4);
  for (char c : std::string_view("IMF1")) out.push_back(static_cast<unsigned char>(c));
  put_u32(out, static_cast<std::uint32_t>(img.width()));
  put_u32(out, static_cast<std::uint32_t>(img.height()));
  put_u32(out, 3);
  for (real v : img.pixels()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Image decode_imf(std::span<const unsigned char> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "IMF1", 4) != 0) {
    throw ValidationError("malformed IMF header");
  }
  const std::uint32_t width = get_u32(bytes, 4);
  const std::uint32_t height = get_u32(bytes, 8);
  const std::uint32_t channels = get_u32(bytes, 12);
  if (channels != 3) throw ValidationError("IMF channel count must be 3, got " + std::to_string(channels));
  if (width == 0 || height == 0 || width > (1u << 15) || height > (1u << 15)) {
    throw ValidationError("IMF dimensions out of range");
  }
  const std::size_t count = std::size_t(width) * height * 3;
  if (bytes.size() - 16 < count * 4) throw ValidationError("IMF payload shorter than header promises");
  std::vector<real> pixels(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float v = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
    if (!std::isfinite(v)) throw ValidationError("IMF contains a non-finite value");
    pixels[i] = static_cast<real>(v);
  }
  return Image(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("missing image file: " + path.string());
  const auto bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "IMF1", 4) == 0) return decode_imf(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  throw ValidationError("unrecognized image format: " + path.string());
}

void save_image(const Image& img, const std::filesystem::path& path, ImageFormat format) {
  if (img.empty()) throw ValidationError("cannot save an empty image");
  if (format == ImageFormat::imf) {
    write_file(path, encode_imf(img));
    return;
  }
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + img.size());
  for (real v : img.pixels()) {
    // round half up
    out.push_back(static_cast<unsigned char>(std::floor(double(v) * 255.0 + 0.5)));
  }
  write_file(path, out);
}

namespace detail {

BilinearTap bilinear_tap(int out_index, int in_size, int out_size) {
  const double scale = double(in_size) / double(out_size);
  double src = (out_index + 0.5) * scale - 0.5;
  src = std::clamp(src, 0.0, double(in_size - 1));
  const int lo = static_cast<int>(std::floor(src));
  const int hi = std::min(lo + 1, in_size - 1);
  return {lo, hi, src - lo};
}

}  // namespace detail

Image resize_bilinear(const Image& img, int new_width, int new_height) {
  check_dimensions(new_width, new_height);
  if (img.empty()) throw ValidationError("cannot resize an empty image");
  if (new_width == img.width() && new_height == img.height()) return img;
  std::vector<detail::BilinearTap> xs(new_width), ys(new_height);
  for (int x = 0; x < new_width; ++x) xs[x] = detail::bilinear_tap(x, img.width(), new_width);
  for (int y = 0; y < new_height; ++y) ys[y] = detail::bilinear_tap(y, img.height(), new_height);
  std::vector<real> out(std::size_t(new_width) * new_height * 3);
  for (int y = 0; y < new_height; ++y) {
    const auto ty = ys[y];
    for (int x = 0; x < new_width; ++x) {
      const auto tx = xs[x];
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - tx.frac) * img.at(tx.lo, ty.lo, c) + tx.frac * img.at(tx.hi, ty.lo, c);
        const double bot = (1 - tx.frac) * img.at(tx.lo, ty.hi, c) + tx.frac * img.at(tx.hi, ty.hi, c);
        out[(std::size_t(y) * new_width + x) * 3 + c] = static_cast<real>((1 - ty.frac) * top + ty.frac * bot);
      }
    }
  }
  return Image(new_width, new_height, std::move(out));
}

real pixel_l2(const Image& a, const Image& b) {
  if (!a.same_shape(b) || a.empty()) throw ValidationError("pixel_l2: dimension mismatch");
  double sum = 0.0;
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = double(pa[i]) - double(pb[i]);
    sum += d * d;
  }
  return static_cast<real>(std::sqrt(sum / double(pa.size())));
}

Image gaussian_blur(const Image& img, real sigma) {
  if (!(sigma >= 0) || !std::isfinite(sigma)) throw ValidationError("blur sigma must be finite and >= 0");
  if (sigma == 0 || img.empty()) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * double(sigma)));
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-double(k) * k / (2.0 * double(sigma) * sigma));
  }
  const int w = img.width();
  const int h = img.height();
  std::vector<double> tmp(img.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0, 0, 0};
      double norm = 0;
      for (int k = -radius; k <= radius; ++k) {
        const int sx = x + k;
        if (sx < 0 || sx >= w) continue;
        const double wk = kernel[k + radius];
        norm += wk;
        for (int c = 0; c < 3; ++c) acc[c] += wk * img.at(sx, y, c);
      }
      for (int c = 0; c < 3; ++c) tmp[(std::size_t(y) * w + x) * 3 + c] = acc[c] / norm;
    }
  }
  std::vector<real> out(img.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0, 0, 0};
      double norm = 0;
      for (int k = -radius; k <= radius; ++k) {
        const int sy = y + k;
        if (sy < 0 || sy >= h) continue;
        const double wk = kernel[k + radius];
        norm += wk;
        for (int c = 0; c < 3; ++c) acc[c] += wk * tmp[(std::size_t(sy) * w + x) * 3 + c];
      }
      for (int c = 0; c < 3; ++c) out[(std::size_t(y) * w + x) * 3 + c] = static_cast<real>(acc[c] / norm);
    }
  }
  return Image(w, h, std::move(out));
}

}  // namespace glazelab
