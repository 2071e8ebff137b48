// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rahf/training.hpp"

namespace rahf {
namespace {

constexpr std::array<int, 64> kLuminanceTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

/// basis[u][x] = c(u) cos((2x + 1) u pi / 16), orthonormal.
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double c = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) b[u][x] = c * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return b;
  }();
  return basis;
}

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

}  // namespace

std::array<double, 64> dct8x8(const std::array<double, 64>& block) {
  const auto& b = dct_basis();
  std::array<double, 64> tmp{}, out{};
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += b[u][x] * block[y * 8 + x];
      tmp[y * 8 + u] = s;
    }
  }
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += b[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = s;
    }
  }
  return out;
}

std::array<double, 64> idct8x8(const std::array<double, 64>& coeffs) {
  const auto& b = dct_basis();
  std::array<double, 64> tmp{}, out{};
  for (int v = 0; v < 8; ++v) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += b[u][x] * coeffs[v * 8 + u];
      tmp[v * 8 + x] = s;
    }
  }
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += b[v][y] * tmp[v * 8 + x];
      out[y * 8 + x] = s;
    }
  }
  return out;
}

std::array<int, 64> jpeg_quant_table(int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg quality must lie in [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> q{};
  for (int i = 0; i < 64; ++i) q[i] = std::max(1, (kLuminanceTable[i] * scale + 50) / 100);
  return q;
}

Image jpeg_emulate(const Image& img, int quality) {
  const auto q = jpeg_quant_table(quality);
  Image out = img;
  const int w = img.width(), h = img.height();
  // Edge blocks are padded by replicating the last row/column.
  for (int c = 0; c < img.channels(); ++c) {
    for (int by = 0; by < h; by += 8) {
      for (int bx = 0; bx < w; bx += 8) {
        std::array<double, 64> block{};
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) {
            const int sx = std::min(bx + x, w - 1), sy = std::min(by + y, h - 1);
            block[y * 8 + x] = std::clamp(img.at(sx, sy, c), 0.0f, 1.0f) * 255.0 - 128.0;
          }
        }
        auto coeffs = dct8x8(block);
        for (int i = 0; i < 64; ++i) coeffs[i] = std::round(coeffs[i] / q[i]) * q[i];
        const auto rec = idct8x8(coeffs);
        for (int y = 0; y < 8 && by + y < h; ++y) {
          for (int x = 0; x < 8 && bx + x < w; ++x) {
            out.at(bx + x, by + y, c) = clamp01(static_cast<float>((rec[y * 8 + x] + 128.0) / 255.0));
          }
        }
      }
    }
  }
  return out;
}

std::array<float, 3> rgb_to_hsv(float r, float g, float b) {
  const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const float d = mx - mn;
  float h = 0.0f;
  if (d > 0.0f) {
    if (mx == r) {
      h = (g - b) / d;
      if (h < 0.0f) h += 6.0f;
    } else if (mx == g) {
      h = (b - r) / d + 2.0f;
    } else {
      h = (r - g) / d + 4.0f;
    }
    h /= 6.0f;
  }
  const float s = mx > 0.0f ? d / mx : 0.0f;
  return {h, s, mx};
}

std::array<float, 3> hsv_to_rgb(float h, float s, float v) {
  h = h - std::floor(h);
  const float hh = h * 6.0f;
  const int sector = std::min(static_cast<int>(hh), 5);
  const float f = hh - static_cast<float>(sector);
  const float p = v * (1.0f - s), q = v * (1.0f - s * f), t = v * (1.0f - s * (1.0f - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Image adjust_brightness(const Image& img, double delta) {
  Image out = img;
  for (float& v : out.storage()) v = static_cast<float>(v + delta);
  return out;
}

Image adjust_contrast(const Image& img, double factor) {
  Image out = img;
  const int n = img.width() * img.height();
  for (int c = 0; c < img.channels(); ++c) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += img.storage()[static_cast<std::size_t>(i) * img.channels() + c];
    mean /= std::max(n, 1);
    for (int i = 0; i < n; ++i) {
      float& v = out.storage()[static_cast<std::size_t>(i) * img.channels() + c];
      v = static_cast<float>((v - mean) * factor + mean);
    }
  }
  return out;
}

namespace {

template <typename F>
Image map_hsv(const Image& img, F f) {
  if (img.channels() != 3) throw std::invalid_argument("hsv adjustment needs a 3-channel image");
  Image out = img;
  auto& d = out.storage();
  for (std::size_t i = 0; i + 2 < d.size(); i += 3) {
    auto hsv = rgb_to_hsv(d[i], d[i + 1], d[i + 2]);
    f(hsv);
    const auto rgb = hsv_to_rgb(hsv[0], hsv[1], hsv[2]);
    d[i] = rgb[0];
    d[i + 1] = rgb[1];
    d[i + 2] = rgb[2];
  }
  return out;
}

}  // namespace

Image adjust_hue(const Image& img, double delta) {
  return map_hsv(img, [delta](std::array<float, 3>& hsv) {
    const float h = static_cast<float>(hsv[0] + delta);
    hsv[0] = h - std::floor(h);
  });
}

Image adjust_saturation(const Image& img, double factor) {
  return map_hsv(img, [factor](std::array<float, 3>& hsv) { hsv[1] = clamp01(static_cast<float>(hsv[1] * factor)); });
}

Image to_grayscale(const Image& img) {
  if (img.channels() != 3) throw std::invalid_argument("grayscale needs a 3-channel image");
  Image out = img;
  auto& d = out.storage();
  for (std::size_t i = 0; i + 2 < d.size(); i += 3) {
    const float y = 0.2989f * d[i] + 0.587f * d[i + 1] + 0.114f * d[i + 2];
    d[i] = d[i + 1] = d[i + 2] = y;
  }
  return out;
}

TrainingSample crop_sample(const TrainingSample& sample, const CropBox& box) {
  TrainingSample out = sample;
  out.image = resize_bilinear(sample.image, box, sample.image.width(), sample.image.height());
  for (auto& h : out.heatmaps) {
    if (!h) continue;
    // Heatmaps share the image's pixel grid up to a uniform scale.
    const double sx = static_cast<double>(h->width()) / sample.image.width();
    const double sy = static_cast<double>(h->height()) / sample.image.height();
    const CropBox hb{box.x * sx, box.y * sy, box.w * sx, box.h * sy};
    h = resize_bilinear(*h, hb, h->width(), h->height());
  }
  return out;
}

TrainingSample augment(const TrainingSample& sample, const AugmentConfig& cfg, Rng& rng) {
  TrainingSample out = sample;
  bool changed = false;
  if (rng.bernoulli(cfg.crop_prob)) {
    const double w = sample.image.width(), h = sample.image.height();
    const double bw = w * rng.uniform(cfg.crop_min, cfg.crop_max);
    const double bh = h * rng.uniform(cfg.crop_min, cfg.crop_max);
    const CropBox box{rng.uniform(0.0, w - bw), rng.uniform(0.0, h - bh), bw, bh};
    out = crop_sample(out, box);
    changed = true;
  }
  if (rng.bernoulli(cfg.photometric_prob)) {
    out.image = adjust_brightness(out.image, rng.uniform(-cfg.brightness_delta, cfg.brightness_delta));
    out.image = adjust_contrast(out.image, rng.uniform(cfg.contrast_min, cfg.contrast_max));
    out.image.clamp01();
    out.image = adjust_hue(out.image, rng.uniform(-cfg.hue_delta, cfg.hue_delta));
    out.image = adjust_saturation(out.image, rng.uniform(cfg.saturation_min, cfg.saturation_max));
    out.image = jpeg_emulate(out.image, rng.uniform_int(cfg.jpeg_quality_min, cfg.jpeg_quality_max));
    changed = true;
  }
  if (rng.bernoulli(cfg.grayscale_prob)) {
    out.image = to_grayscale(out.image);
    changed = true;
  }
  if (changed) out.image.clamp01();
  return out;
}

}  // namespace rahf
