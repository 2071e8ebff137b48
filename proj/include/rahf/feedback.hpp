// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rahf {

/// Record or field failed validation. `field()` holds a path such as
/// "scores.alignment" or "artifact_points[2]".
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct Point {
  float x = 0.0f;
  float y = 0.0f;
  bool operator==(const Point&) const = default;
};

enum class ScoreType { kPlausibility = 0, kAlignment = 1, kAesthetics = 2, kOverall = 3 };
inline constexpr std::array<ScoreType, 4> kScoreTypes = {ScoreType::kPlausibility, ScoreType::kAlignment,
                                                          ScoreType::kAesthetics, ScoreType::kOverall};
std::string_view score_name(ScoreType t);
ScoreType parse_score_type(std::string_view name);

enum class HeatmapType { kArtifact = 0, kMisalignment = 1 };
inline constexpr std::array<HeatmapType, 2> kHeatmapTypes = {HeatmapType::kArtifact, HeatmapType::kMisalignment};
std::string_view heatmap_name(HeatmapType t);

using KeywordLabels = std::vector<std::uint8_t>;

/// One annotator's raw feedback for one image-prompt pair. `width`/`height`
/// are the image dimensions the points refer to.
struct AnnotationRecord {
  std::string image_id;
  std::string prompt;
  std::string annotator_id;
  int width = 0;
  int height = 0;
  std::vector<Point> artifact_points;
  std::vector<Point> misalignment_points;
  std::vector<int> misaligned_word_indices;
  std::array<int, 4> scores{};  // indexed by ScoreType, 1..5
  bool skipped = false;

  int score(ScoreType t) const { return scores[static_cast<int>(t)]; }
  bool operator==(const AnnotationRecord&) const = default;
};

/// Throws ValidationError naming the first offending field.
void validate_record(const AnnotationRecord& r);

/// H x W grid, row-major, values in [0, 1].
class Heatmap {
 public:
  Heatmap() = default;
  Heatmap(int width, int height, float fill = 0.0f);
  Heatmap(int width, int height, std::vector<float> values);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  float at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  float& at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }
  bool all_zero() const;
  bool same_dims(const Heatmap& o) const { return width_ == o.width_ && height_ == o.height_; }

  bool operator==(const Heatmap&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> values_;
};

struct ConsolidatedSample {
  std::string image_id;
  std::string prompt;
  Heatmap artifact_heatmap;
  Heatmap misalignment_heatmap;
  std::array<float, 4> scores{};  // standardized, indexed by ScoreType
  KeywordLabels keyword_labels;
  int annotator_count = 0;
  std::vector<Point> artifact_points;  // union over annotators
  std::vector<Point> misalignment_points;

  const Heatmap& heatmap(HeatmapType t) const {
    return t == HeatmapType::kArtifact ? artifact_heatmap : misalignment_heatmap;
  }
  const std::vector<Point>& points(HeatmapType t) const {
    return t == HeatmapType::kArtifact ? artifact_points : misalignment_points;
  }
};

/// Prompt words with every misaligned word carrying the literal "_0" suffix.
struct MisalignmentTarget {
  std::vector<std::string> words;
  std::string text() const;
};

inline constexpr std::string_view kMisalignedSuffix = "_0";
inline constexpr double kDefaultRadiusFraction = 1.0 / 20.0;

/// Splits on runs of whitespace; punctuation stays attached.
std::vector<std::string> split_words(std::string_view text);
std::string join_words(std::span<const std::string> words);

/// Binary disk rendering: a pixel (x, y) is lit when its integer center lies
/// within radius_frac * height of some point (distance <= radius).
Heatmap render_point_heatmap(std::span<const Point> points, int width, int height,
                             double radius_frac = kDefaultRadiusFraction);

/// Pixel-wise mean of equally sized maps.
Heatmap consolidate_heatmaps(std::span<const Heatmap> maps);

/// (s - 1) / 4 for a 1..5 Likert score.
float standardize_score(int s);
/// Mean of standardized scores.
float consolidate_scores(std::span<const int> raw);
/// max - min of the standardized scores.
float max_diff(std::span<const int> raw);

/// Per-word most frequent label; ties resolve to aligned (0).
KeywordLabels majority_vote_keywords(std::span<const KeywordLabels> label_vectors);

MisalignmentTarget encode_misalignment_target(std::span<const std::string> prompt_words, const KeywordLabels& labels);

struct DecodedMisalignment {
  KeywordLabels labels;
  std::set<std::string> keywords;
  int skipped = 0;  // decoder words with no matching prompt position
};

/// Greedy positional alignment of decoder words against the prompt. Never
/// throws; unmatched decoder words are counted in `skipped`.
DecodedMisalignment decode_misalignment(std::span<const std::string> target_words,
                                        std::span<const std::string> prompt_words);

/// Per-word labels from a record's misaligned word indices.
KeywordLabels record_keyword_labels(const AnnotationRecord& r);

/// Consolidates all non-skipped records of one image. Throws
/// ValidationError when the records disagree on image/prompt/dims or when
/// every record was skipped.
ConsolidatedSample consolidate_group(std::span<const AnnotationRecord> records,
                                     double radius_frac = kDefaultRadiusFraction);

/// Groups records by image_id (first-appearance order), drops skipped
/// records and consolidates each non-empty group.
std::vector<ConsolidatedSample> consolidate_records(std::span<const AnnotationRecord> records,
                                                    double radius_frac = kDefaultRadiusFraction);

}  // namespace rahf
