// SPDX-License-Identifier: Apache-2.0
// Feedback models and generators with closed-form behaviour.
#pragma once

#include <stdexcept>

#include "rahf/pipelines.hpp"

namespace rahf::testing {

/// Heatmap fixed by the caller; score is the mean pixel value of channel 0.
class TableModel : public FeedbackModel {
 public:
  explicit TableModel(Heatmap heatmap) : heatmap_(std::move(heatmap)) {}
  Heatmap predict_heatmap(const Image&, const std::string&, HeatmapType) const override { return heatmap_; }
  float predict_score(const Image& image, const std::string&, ScoreType) const override {
    double acc = 0;
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x) acc += image.at(x, y, 0);
    return static_cast<float>(acc / (image.width() * image.height()));
  }
  Image score_gradient(const Image& image, const std::string&, ScoreType) const override {
    Image g(image.width(), image.height(), image.channels());
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x) g.at(x, y, 0) = 1.0f / (image.width() * image.height());
    return g;
  }

 private:
  Heatmap heatmap_;
};

/// s = -sum (x - 0.5)^2 with its analytic gradient.
class QuadraticModel : public FeedbackModel {
 public:
  Heatmap predict_heatmap(const Image& image, const std::string&, HeatmapType) const override {
    return Heatmap(image.width(), image.height());
  }
  float predict_score(const Image& image, const std::string&, ScoreType) const override {
    double acc = 0;
    for (float v : image.storage()) acc -= (v - 0.5) * (v - 0.5);
    return static_cast<float>(acc);
  }
  Image score_gradient(const Image& image, const std::string&, ScoreType) const override {
    Image g = image;
    for (float& v : g.storage()) v = -2.0f * (v - 0.5f);
    return g;
  }
};

class FailingGenerator : public GeneratorClient {
 public:
  std::vector<Image> generate(const std::string&, int, std::uint64_t) override {
    throw std::runtime_error("generator offline");
  }
  std::vector<Image> inpaint(const Image&, const BinaryMask&, const std::string&, int, std::uint64_t) override {
    throw std::runtime_error("generator offline");
  }
};

}  // namespace rahf::testing
