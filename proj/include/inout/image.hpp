#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace inout {

struct Resolution {
  int width = 0;
  int height = 0;
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

// Interleaved (row-major, channel-last) float image. Intensities live in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  Resolution resolution() const { return {width, height}; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool empty() const { return pixels.empty(); }

  friend bool operator==(const Image&, const Image&) = default;
};

// Single-channel 0/1 mask, row-major.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}
  unsigned char& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }
  unsigned char at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  double coverage() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

// SHA-256 over dimensions and the raw float bytes.
std::string image_digest(const Image& image);

Image crop(const Image& image, int x0, int y0, int w, int h);
// Bilinear with pixel-centre alignment; a same-size resize is an exact copy.
Image resize_bilinear(const Image& image, int out_w, int out_h);
Image flip_horizontal(const Image& image);
Image to_rgb(const Image& image);
Image to_gray(const Image& image);
void clamp_unit(Image& image);

// 8/16-bit PNG, any colour type. Returns intensities scaled to [0,1].
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const Mask& mask);

}  // namespace inout
