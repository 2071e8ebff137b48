// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "rahf/feedback.hpp"

namespace rahf {

/// Interleaved H x W x C float image, values nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels = 3, float fill = 0.0f);
  Image(int width, int height, int channels, std::vector<float> values);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }

  float& at(int x, int y, int c) { return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c]; }
  float at(int x, int y, int c) const { return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c]; }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  void clamp01();
  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Crop box in continuous pixel coordinates; the region [x, x+w) x [y, y+h).
struct CropBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

/// Bilinear resampling of `box` to out_w x out_h, half-pixel centers
/// (align_corners = false), edge-clamped.
Image resize_bilinear(const Image& src, const CropBox& box, int out_w, int out_h);
Image resize_bilinear(const Image& src, int out_w, int out_h);
Heatmap resize_bilinear(const Heatmap& src, const CropBox& box, int out_w, int out_h);
Heatmap resize_bilinear(const Heatmap& src, int out_w, int out_h);

/// Reads 8/16-bit gray, gray+alpha, RGB or RGBA PNG as a 3-channel image.
Image read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const Image& image);

/// 8-bit grayscale heatmap, stored value = round(255 v).
void write_heatmap_png(const std::filesystem::path& path, const Heatmap& map);
Heatmap read_heatmap_png(const std::filesystem::path& path);

/// 8-bit grayscale, pixel = round(255 v) for each value in [0,1].
void write_gray_png(const std::filesystem::path& path, int width, int height, std::span<const float> values);

std::uint8_t to_byte(float v);

}  // namespace rahf
