// SPDX-License-Identifier: Apache-2.0
#include "rahf/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace rahf {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width <= 0 || height <= 0 || channels <= 0) throw std::invalid_argument("image dimensions must be positive");
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<float> values)
    : width_(width), height_(height), channels_(channels), data_(std::move(values)) {
  if (width <= 0 || height <= 0 || channels <= 0) throw std::invalid_argument("image dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw std::invalid_argument("image value count does not match dimensions");
  }
}

void Image::clamp01() {
  for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

namespace {

struct Tap {
  int i0, i1;
  float f;
};

Tap tap(double coord, int size) {
  const double c = std::clamp(coord, 0.0, static_cast<double>(size - 1));
  const int i0 = static_cast<int>(std::floor(c));
  const int i1 = std::min(i0 + 1, size - 1);
  return {i0, i1, static_cast<float>(c - i0)};
}

template <typename Sample, typename Store>
void resample(int src_w, int src_h, const CropBox& box, int out_w, int out_h, int channels, Sample sample,
              Store store) {
  if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("resize: output dims must be positive");
  if (!(box.w > 0.0 && box.h > 0.0)) throw std::invalid_argument("resize: empty crop box");
  const double sx = box.w / out_w;
  const double sy = box.h / out_h;
  for (int y = 0; y < out_h; ++y) {
    const Tap ty = tap(box.y + (y + 0.5) * sy - 0.5, src_h);
    for (int x = 0; x < out_w; ++x) {
      const Tap tx = tap(box.x + (x + 0.5) * sx - 0.5, src_w);
      for (int c = 0; c < channels; ++c) {
        const float top = sample(tx.i0, ty.i0, c) * (1.0f - tx.f) + sample(tx.i1, ty.i0, c) * tx.f;
        const float bot = sample(tx.i0, ty.i1, c) * (1.0f - tx.f) + sample(tx.i1, ty.i1, c) * tx.f;
        store(x, y, c, ty.f == 0.0f ? top : top * (1.0f - ty.f) + bot * ty.f);
      }
    }
  }
}

}  // namespace

Image resize_bilinear(const Image& src, const CropBox& box, int out_w, int out_h) {
  Image out(out_w, out_h, src.channels());
  resample(
      src.width(), src.height(), box, out_w, out_h, src.channels(),
      [&](int x, int y, int c) { return src.at(x, y, c); }, [&](int x, int y, int c, float v) { out.at(x, y, c) = v; });
  return out;
}

Image resize_bilinear(const Image& src, int out_w, int out_h) {
  return resize_bilinear(src, CropBox{0, 0, static_cast<double>(src.width()), static_cast<double>(src.height())}, out_w,
                         out_h);
}

Heatmap resize_bilinear(const Heatmap& src, const CropBox& box, int out_w, int out_h) {
  std::vector<float> out(static_cast<std::size_t>(out_w) * out_h);
  resample(
      src.width(), src.height(), box, out_w, out_h, 1, [&](int x, int y, int) { return src.at(x, y); },
      [&](int x, int y, int, float v) { out[static_cast<std::size_t>(y) * out_w + x] = std::clamp(v, 0.0f, 1.0f); });
  return Heatmap(out_w, out_h, std::move(out));
}

Heatmap resize_bilinear(const Heatmap& src, int out_w, int out_h) {
  return resize_bilinear(src, CropBox{0, 0, static_cast<double>(src.width()), static_cast<double>(src.height())}, out_w,
                         out_h);
}

namespace {

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, int& w, int& h) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + msg);
  }
  w = static_cast<int>(img.width);
  h = static_cast<int>(img.height);
  return buf;
}

void write_png(const std::filesystem::path& path, int w, int h, png_uint_32 format, const std::vector<std::uint8_t>& buf) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + img.message);
  }
}

}  // namespace

Image read_png_rgb(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto buf = read_png(path, PNG_FORMAT_RGB, w, h);
  std::vector<float> v(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) v[i] = buf[i] / 255.0f;
  return Image(w, h, 3, std::move(v));
}

void write_png_rgb(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 3) throw std::invalid_argument("write_png_rgb: expected 3 channels");
  std::vector<std::uint8_t> buf(image.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(image.values()[i]);
  write_png(path, image.width(), image.height(), PNG_FORMAT_RGB, buf);
}

void write_gray_png(const std::filesystem::path& path, int width, int height, std::span<const float> values) {
  std::vector<std::uint8_t> buf(values.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(values[i]);
  write_png(path, width, height, PNG_FORMAT_GRAY, buf);
}

void write_heatmap_png(const std::filesystem::path& path, const Heatmap& map) {
  write_gray_png(path, map.width(), map.height(), map.values());
}

Heatmap read_heatmap_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto buf = read_png(path, PNG_FORMAT_GRAY, w, h);
  std::vector<float> v(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) v[i] = buf[i] / 255.0f;
  return Heatmap(w, h, std::move(v));
}

}  // namespace rahf
