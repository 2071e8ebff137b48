// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rahf/feedback.hpp"

namespace rahf::metrics {

/// A correlation or saliency metric has no defined value for the input
/// (constant series, empty ground truth, no fixations).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kKldEpsilon = 1e-7;

double plcc(std::span<const double> xs, std::span<const double> ys);
/// Pearson correlation of average ranks (ties share the mean rank).
double srcc(std::span<const double> xs, std::span<const double> ys);
/// 1-based ranks, ties replaced by their average.
std::vector<double> average_ranks(std::span<const double> xs);

double heatmap_mse(const Heatmap& pred, const Heatmap& gt);

/// Pixel-wise Pearson correlation. Requires non-empty, non-constant GT and
/// non-constant prediction.
double cc(const Heatmap& pred, const Heatmap& gt);
/// KL(gt || pred) after normalizing both to unit mass; an all-zero
/// prediction is treated as uniform.
/// sum_i G_i * ln(G_i / (P_i + eps) + eps)
double kld(const Heatmap& gt, const Heatmap& pred);
/// Histogram intersection of the unit-mass maps.
double sim(const Heatmap& pred, const Heatmap& gt);

struct Pixel {
  int x = 0;
  int y = 0;
  auto operator<=>(const Pixel&) const = default;
};

/// Nearest-integer snap of float points, clamped to the grid, deduplicated
/// and sorted. Throws UndefinedMetric for points outside [0,W)x[0,H).
std::vector<Pixel> fixation_pixels(std::span<const Point> points, int width, int height);

/// Mean z-score (population std) of the prediction at the fixation pixels.
double nss(const Heatmap& pred, std::span<const Point> fixations);
/// Judd ROC area: fixation pixels are positives, all other pixels are
/// negatives; one threshold per distinct fixation value.
double auc_judd(const Heatmap& pred, std::span<const Point> fixations);

struct TokenEvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

struct LabelPair {
  KeywordLabels pred;
  KeywordLabels gt;
};

/// Micro-averaged over every word of every sample.
TokenEvalReport token_prf(std::span<const LabelPair> samples);

struct HeatmapEvalInput {
  Heatmap pred;
  Heatmap gt;
  std::vector<Point> fixations;
};

struct HeatmapEvalReport {
  std::size_t count_all = 0;
  std::size_t count_empty_gt = 0;
  std::size_t count_nonempty_gt = 0;
  std::optional<double> mse_all;
  std::optional<double> mse_empty_gt;
  // Sample averages over the non-empty-GT subset; a sample whose metric is
  // undefined (e.g. constant prediction) is left out of that average.
  std::optional<double> cc, kld, sim, nss, auc_judd;
  std::size_t undefined_count = 0;
};

/// When a non-empty-GT sample has no fixation points, the pixels where the
/// GT reaches its maximum serve as fixations.
HeatmapEvalReport evaluate_heatmaps(std::span<const HeatmapEvalInput> pairs);

struct ScoreCorrelation {
  std::optional<double> plcc;
  std::optional<double> srcc;
};

struct ScoreEvalReport {
  std::array<ScoreCorrelation, 4> per_type;  // indexed by ScoreType
  std::size_t count = 0;
};

/// pred/gt: per-sample score arrays indexed by ScoreType.
ScoreEvalReport evaluate_scores(std::span<const std::array<float, 4>> pred, std::span<const std::array<float, 4>> gt);

struct EvalReport {
  ScoreEvalReport scores;
  HeatmapEvalReport artifact;
  HeatmapEvalReport misalignment;
  TokenEvalReport keywords;
  std::size_t matched_samples = 0;
};

/// key=value lines with fixed key names; absent values are written as "na".
std::string to_text(const EvalReport& report);

}  // namespace rahf::metrics
