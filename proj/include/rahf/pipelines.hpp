// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rahf/dataset_io.hpp"
#include "rahf/feedback.hpp"
#include "rahf/image.hpp"
#include "rahf/model.hpp"

namespace rahf {

/// H x W booleans stored as 0/1 bytes.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height) : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool operator==(const BinaryMask&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

inline constexpr double kDefaultMaskThreshold = 0.3;
/// Default dilation radius as a fraction of the image height.
inline constexpr double kDefaultDilationFraction = 1.0 / 40.0;

/// {pixels >= threshold} dilated by the integer-offset disk dx^2 + dy^2 <= r^2.
BinaryMask heatmap_to_mask(const Heatmap& heatmap, double threshold, double radius_px);
BinaryMask dilate(const BinaryMask& mask, double radius_px);
/// 0/255 grayscale PNG.
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_mask_png(const std::filesystem::path& path);

/// Scoring interface the pipelines depend on.
class FeedbackModel {
 public:
  virtual ~FeedbackModel() = default;
  virtual Heatmap predict_heatmap(const Image& image, const std::string& prompt, HeatmapType type) const = 0;
  virtual float predict_score(const Image& image, const std::string& prompt, ScoreType type) const = 0;
  /// d score / d pixels.
  virtual Image score_gradient(const Image& image, const std::string& prompt, ScoreType type) const = 0;
};

class RahfFeedbackModel final : public FeedbackModel {
 public:
  explicit RahfFeedbackModel(const RahfModel& model) : model_(model) {}
  Heatmap predict_heatmap(const Image& image, const std::string& prompt, HeatmapType type) const override;
  float predict_score(const Image& image, const std::string& prompt, ScoreType type) const override;
  Image score_gradient(const Image& image, const std::string& prompt, ScoreType type) const override;

 private:
  const RahfModel& model_;
};

class GeneratorClient {
 public:
  virtual ~GeneratorClient() = default;
  virtual std::vector<Image> generate(const std::string& prompt, int n, std::uint64_t seed) = 0;
  /// n candidates that may differ from `image` only inside `mask`.
  virtual std::vector<Image> inpaint(const Image& image, const BinaryMask& mask, const std::string& prompt, int n,
                                     std::uint64_t seed) = 0;
};

/// Seeded noise images; inpaint keeps the input outside the mask and fills
/// the masked region with noise.
class StubGenerator final : public GeneratorClient {
 public:
  StubGenerator(int width, int height) : width_(width), height_(height) {}
  std::vector<Image> generate(const std::string& prompt, int n, std::uint64_t seed) override;
  std::vector<Image> inpaint(const Image& image, const BinaryMask& mask, const std::string& prompt, int n,
                             std::uint64_t seed) override;
  int generate_calls() const { return generate_calls_; }
  int inpaint_calls() const { return inpaint_calls_; }

 private:
  int width_, height_;
  int generate_calls_ = 0;
  int inpaint_calls_ = 0;
};

struct Candidate {
  Image image;
  float score = 0.0f;
};

struct Selection {
  std::string prompt;
  std::size_t index = 0;
  float score = 0.0f;
};

/// Per prompt: the argmax candidate (first on ties) when its score reaches
/// `threshold`. Prompts are visited in key order.
std::vector<Selection> filter_finetune_set(const std::map<std::string, std::vector<Candidate>>& candidates,
                                           double threshold = 0.8);

struct BestOfN {
  std::size_t index = 0;
  float score = 0.0f;
  std::vector<float> scores;
};

/// Argmax of the model score; lowest index on ties. Throws on empty input.
BestOfN best_of_n(const std::vector<Image>& images, const std::string& prompt, ScoreType type,
                  const FeedbackModel& model);

struct RepairOptions {
  double threshold = kDefaultMaskThreshold;
  double radius_px = -1.0;  // negative: image height * kDefaultDilationFraction
  int candidates = 4;
  std::uint64_t seed = 0;
};

struct RepairAudit {
  std::string prompt;
  Heatmap heatmap;
  BinaryMask mask;
  std::size_t mask_pixels = 0;
  std::vector<float> candidate_scores;
  std::optional<std::size_t> chosen;  // empty when the input was returned as-is
  float original_score = 0.0f;
  std::string error;  // set when the generator failed

  json to_json() const;
};

struct RepairResult {
  Image image;
  RepairAudit audit;
};

/// Predicts the implausibility heatmap, masks it and, unless the mask is
/// empty, inpaints `candidates` images and keeps the most plausible one.
/// Generator errors are rethrown as RepairError carrying the partial audit.
RepairResult inpaint_repair(const Image& image, const std::string& prompt, const FeedbackModel& model,
                            GeneratorClient& generator, const RepairOptions& opts = {});

class RepairError : public std::runtime_error {
 public:
  RepairError(const std::string& what, RepairAudit audit) : std::runtime_error(what), audit_(std::move(audit)) {}
  const RepairAudit& audit() const { return audit_; }

 private:
  RepairAudit audit_;
};

/// clamp(image + step_size * d score / d image, 0, 1). Throws on a negative
/// step or non-finite gradient.
Image guidance_step(const Image& image, const std::string& prompt, ScoreType type, double step_size,
                    const FeedbackModel& model);

}  // namespace rahf
