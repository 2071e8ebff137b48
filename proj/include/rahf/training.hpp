// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rahf/autodiff.hpp"
#include "rahf/dataset_io.hpp"
#include "rahf/feedback.hpp"
#include "rahf/image.hpp"
#include "rahf/kv_config.hpp"
#include "rahf/model.hpp"

namespace rahf {

/// Linear warmup then reciprocal square root decay:
/// base * min(step / warmup, sqrt(warmup / step)). Requires step >= 1.
double lr_schedule(int step, double base_lr, int warmup_steps);

struct AugmentConfig {
  double crop_prob = 0.5;
  double crop_min = 0.8;  // fraction of width/height
  double crop_max = 1.0;
  double photometric_prob = 0.1;
  double brightness_delta = 0.05;
  double contrast_min = 0.8;
  double contrast_max = 1.0;
  double hue_delta = 0.025;  // normalized hue units
  double saturation_min = 0.8;
  double saturation_max = 1.0;
  int jpeg_quality_min = 70;
  int jpeg_quality_max = 100;
  double grayscale_prob = 0.1;

  static AugmentConfig disabled();
};

struct LossWeights {
  double heatmap = 1.0;
  double score = 1.0;
  double sequence = 1.0;
};

struct TrainConfig {
  int batch_size = 8;
  int total_steps = 500;
  double base_lr = 2e-3;
  int warmup_steps = 20;
  double weight_decay = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights;
  AugmentConfig augment = AugmentConfig::disabled();
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on the first violated invariant.
  void validate() const;
  KvConfig to_kv() const;
  static TrainConfig from_kv(const KvConfig& kv);

  static TrainConfig toy();
  static TrainConfig full();
};

/// Model-resolution training targets for one image-prompt pair.
struct TrainingSample {
  std::string image_id;
  Image image;
  std::string prompt;
  std::array<std::optional<Heatmap>, 2> heatmaps;  // by HeatmapType
  std::array<std::optional<float>, 4> scores;      // by ScoreType, standardized
  std::optional<MisalignmentTarget> target;
};

/// Resizes image and heatmaps to `image_size` and derives the "_0" target.
TrainingSample make_training_sample(const ConsolidatedSample& sample, const Image& image, int image_size);

// ---- loss ------------------------------------------------------------------
struct LossInputs {
  std::vector<std::pair<ad::Var, const Heatmap*>> heatmaps;  // prediction [H, W] vs target
  std::vector<std::pair<ad::Var, float>> scores;             // prediction [1] vs target
  std::optional<ad::Var> logits;                             // [T, V]
  std::vector<int> target_ids;                               // length T, pad positions ignored
};

struct LossValue {
  ad::Var total;
  double heatmap = 0.0;   // mean per-map pixel MSE
  double score = 0.0;     // mean squared score error
  double sequence = 0.0;  // mean token cross-entropy
};

/// total = w_h * heatmap + w_s * score + w_t * sequence; absent components
/// contribute zero.
LossValue compute_loss(ad::Tape& tape, const LossInputs& in, const LossWeights& w);

// ---- augmentation ----------------------------------------------------------
/// Applies crop (image and heatmaps together), then the photometric bundle
/// (brightness, contrast, hue, saturation, jpeg), then grayscale, each gated
/// by its probability. Output pixels are clamped to [0, 1].
TrainingSample augment(const TrainingSample& sample, const AugmentConfig& cfg, Rng& rng);

/// Crops `box` from the image and both heatmaps and resizes back.
TrainingSample crop_sample(const TrainingSample& sample, const CropBox& box);

Image adjust_brightness(const Image& img, double delta);
/// Per-channel (x - mean) * factor + mean.
Image adjust_contrast(const Image& img, double factor);
Image adjust_hue(const Image& img, double delta);
Image adjust_saturation(const Image& img, double factor);
Image to_grayscale(const Image& img);

/// h, s, v in [0, 1].
std::array<float, 3> rgb_to_hsv(float r, float g, float b);
std::array<float, 3> hsv_to_rgb(float h, float s, float v);

/// Orthonormal 8x8 DCT-II and its inverse, row-major blocks.
std::array<double, 64> dct8x8(const std::array<double, 64>& block);
std::array<double, 64> idct8x8(const std::array<double, 64>& coeffs);
/// Standard luminance table scaled for `quality`, entries >= 1.
std::array<int, 64> jpeg_quant_table(int quality);
/// Blockwise DCT quantization of every channel on the 0..255 scale.
Image jpeg_emulate(const Image& img, int quality);

// ---- optimizer -------------------------------------------------------------
/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void step(ParameterStore& params, const ParameterStore& grads, double lr);
  int steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
  ParameterStore m_, v_;
};

// ---- training loop ---------------------------------------------------------
struct LossRecord {
  int step = 0;
  double lr = 0.0;
  double total = 0.0;
  double heatmap = 0.0;
  double score = 0.0;
  double sequence = 0.0;
};

std::string loss_record_json(const LossRecord& r);

/// One unit of work: a sample, and for the augmented-prompt variant the task
/// it trains (nullopt = the decoder target under the plain prompt).
struct TrainExample {
  std::size_t sample = 0;
  std::optional<Task> task;
};
std::vector<TrainExample> expand_examples(const ModelConfig& config, std::size_t sample_count);

/// Loss of one example with gradients accumulated on the tape's parameters.
LossValue example_loss(const RahfModel& model, ParamBinding& p, const TrainingSample& sample,
                       std::optional<Task> task, const LossWeights& w);

struct TrainResult {
  std::vector<LossRecord> history;
};

using ProgressFn = std::function<void(const LossRecord&)>;

/// Trains in place. Each step averages the loss over `batch_size` examples
/// drawn from a per-epoch shuffle keyed by the seed. Throws on a non-finite
/// loss, naming the step.
TrainResult train(RahfModel& model, const std::vector<TrainingSample>& data, const TrainConfig& cfg,
                  const ProgressFn& progress = {});

void write_loss_history(const std::filesystem::path& path, const std::vector<LossRecord>& history);

}  // namespace rahf
