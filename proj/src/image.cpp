#include "inout/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "inout/digest.hpp"
#include "inout/errors.hpp"

namespace inout {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](unsigned char b) { return b != 0; }));
}

double Mask::coverage() const {
  return bits.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits.size());
}

std::string image_digest(const Image& image) {
  Sha256 h;
  const int dims[3] = {image.width, image.height, image.channels};
  h.update(std::as_bytes(std::span(dims)));
  h.update(std::as_bytes(std::span(image.pixels)));
  return h.hex();
}

Image crop(const Image& image, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > image.width || y0 + h > image.height) {
    throw ValidationError("crop window outside image");
  }
  Image out(w, h, image.channels);
  const std::size_t row = static_cast<std::size_t>(w) * image.channels;
  for (int y = 0; y < h; ++y) {
    const float* src = &image.pixels[(static_cast<std::size_t>(y0 + y) * image.width + x0) * image.channels];
    std::copy(src, src + row, &out.pixels[static_cast<std::size_t>(y) * row]);
  }
  return out;
}

Image resize_bilinear(const Image& image, int out_w, int out_h) {
  if (out_w == image.width && out_h == image.height) return image;
  Image out(out_w, out_h, image.channels);
  const double sx = static_cast<double>(image.width) / out_w;
  const double sy = static_cast<double>(image.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = (1 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c);
        const double bottom = (1 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(y, image.width - 1 - x, c);
  return out;
}

Image to_rgb(const Image& image) {
  if (image.channels == 3) return image;
  Image out(image.width, image.height, 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(y, x, std::min(c, image.channels - 1));
  return out;
}

Image to_gray(const Image& image) {
  if (image.channels == 1) return image;
  Image out(image.width, image.height, 1);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      float sum = 0;
      for (int c = 0; c < image.channels; ++c) sum += image.at(y, x, c);
      out.at(y, x, 0) = sum / static_cast<float>(image.channels);
    }
  return out;
}

void clamp_unit(Image& image) {
  for (float& v : image.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IngestError("cannot open image: " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IngestError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestError("libpng init failed: " + path.string());
  }
  Image out;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestError("corrupt PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out = Image(w, h, channels);
  const float denom = depth == 16 ? 65535.0f : 255.0f;
  for (int y = 0; y < h; ++y) {
    for (int i = 0; i < w * channels; ++i) {
      const unsigned v = depth == 16 ? (rows[y][2 * i] << 8) | rows[y][2 * i + 1] : rows[y][i];
      out.pixels[static_cast<std::size_t>(y) * w * channels + i] = static_cast<float>(v) / denom;
    }
  }
  return out;
}

namespace {

void write_png_bytes(const std::filesystem::path& path, int w, int h, int channels,
                     const std::vector<unsigned char>& data) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("cannot write image: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encode failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(data.data() + static_cast<std::size_t>(y) * w * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ValidationError("PNG export needs 1 or 3 channels");
  std::vector<unsigned char> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0f, 1.0f) * 255.0f));
  }
  write_png_bytes(path, image.width, image.height, image.channels, bytes);
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<unsigned char> bytes(mask.bits.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.bits[i] ? 255 : 0;
  write_png_bytes(path, mask.width, mask.height, 1, bytes);
}

}  // namespace inout
