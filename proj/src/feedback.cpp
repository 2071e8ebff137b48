// SPDX-License-Identifier: Apache-2.0
#include "rahf/feedback.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace rahf {

std::string_view score_name(ScoreType t) {
  switch (t) {
    case ScoreType::kPlausibility: return "plausibility";
    case ScoreType::kAlignment: return "alignment";
    case ScoreType::kAesthetics: return "aesthetics";
    case ScoreType::kOverall: return "overall";
  }
  return "unknown";
}

ScoreType parse_score_type(std::string_view name) {
  for (ScoreType t : kScoreTypes) {
    if (score_name(t) == name) return t;
  }
  throw ValidationError("score_type", "unknown score type '" + std::string(name) + "'");
}

std::string_view heatmap_name(HeatmapType t) {
  return t == HeatmapType::kArtifact ? "artifact" : "misalignment";
}

Heatmap::Heatmap(int width, int height, float fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw ValidationError("heatmap", "dimensions must be positive");
  if (!(fill >= 0.0f && fill <= 1.0f)) throw ValidationError("heatmap", "fill value outside [0,1]");
  values_.assign(static_cast<std::size_t>(width) * height, fill);
}

Heatmap::Heatmap(int width, int height, std::vector<float> values)
    : width_(width), height_(height), values_(std::move(values)) {
  if (width <= 0 || height <= 0) throw ValidationError("heatmap", "dimensions must be positive");
  if (values_.size() != static_cast<std::size_t>(width) * height) {
    throw ValidationError("heatmap", "value count does not match dimensions");
  }
  for (float v : values_) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("heatmap", "value outside [0,1]");
  }
}

bool Heatmap::all_zero() const {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return v == 0.0f; });
}

std::string MisalignmentTarget::text() const { return join_words(words); }

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

namespace {

void validate_points(const std::vector<Point>& pts, const std::string& name, int w, int h) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point& p = pts[i];
    if (!(p.x >= 0.0f && p.x < static_cast<float>(w) && p.y >= 0.0f && p.y < static_cast<float>(h))) {
      throw ValidationError(name + "[" + std::to_string(i) + "]", "point outside image bounds");
    }
  }
}

}  // namespace

void validate_record(const AnnotationRecord& r) {
  if (r.image_id.empty()) throw ValidationError("image_id", "must not be empty");
  if (r.annotator_id.empty()) throw ValidationError("annotator_id", "must not be empty");
  if (r.width <= 0) throw ValidationError("width", "must be positive");
  if (r.height <= 0) throw ValidationError("height", "must be positive");
  validate_points(r.artifact_points, "artifact_points", r.width, r.height);
  validate_points(r.misalignment_points, "misalignment_points", r.width, r.height);
  const auto n_words = static_cast<int>(split_words(r.prompt).size());
  std::vector<int> seen;
  for (std::size_t i = 0; i < r.misaligned_word_indices.size(); ++i) {
    const int idx = r.misaligned_word_indices[i];
    const std::string field = "misaligned_word_indices[" + std::to_string(i) + "]";
    if (idx < 0 || idx >= n_words) throw ValidationError(field, "word index out of range");
    if (std::find(seen.begin(), seen.end(), idx) != seen.end()) throw ValidationError(field, "duplicate word index");
    seen.push_back(idx);
  }
  if (r.skipped) return;
  for (ScoreType t : kScoreTypes) {
    const int s = r.score(t);
    if (s < 1 || s > 5) {
      throw ValidationError("scores." + std::string(score_name(t)), "score must be an integer in 1..5");
    }
  }
}

Heatmap render_point_heatmap(std::span<const Point> points, int width, int height, double radius_frac) {
  if (width <= 0 || height <= 0) throw ValidationError("heatmap", "dimensions must be positive");
  if (!(radius_frac > 0.0)) throw ValidationError("radius_frac", "must be positive");
  Heatmap map(width, height);
  const double radius = radius_frac * height;
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!(p.x >= 0.0f && p.x < static_cast<float>(width) && p.y >= 0.0f && p.y < static_cast<float>(height))) {
      throw ValidationError("points[" + std::to_string(i) + "]", "point outside image bounds");
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(p.x - radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(p.x + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(p.y - radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(p.y + radius)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - static_cast<double>(p.x);
        const double dy = y - static_cast<double>(p.y);
        if (dx * dx + dy * dy <= r2) map.at(x, y) = 1.0f;
      }
    }
  }
  return map;
}

Heatmap consolidate_heatmaps(std::span<const Heatmap> maps) {
  if (maps.empty()) throw ValidationError("maps", "need at least one heatmap");
  const Heatmap& first = maps.front();
  for (std::size_t i = 1; i < maps.size(); ++i) {
    if (!maps[i].same_dims(first)) throw ValidationError("maps[" + std::to_string(i) + "]", "dimension mismatch");
  }
  std::vector<float> out(first.size());
  const double n = static_cast<double>(maps.size());
  for (std::size_t p = 0; p < out.size(); ++p) {
    double acc = 0.0;
    for (const Heatmap& m : maps) acc += m.values()[p];
    out[p] = static_cast<float>(acc / n);
  }
  return Heatmap(first.width(), first.height(), std::move(out));
}

float standardize_score(int s) {
  if (s < 1 || s > 5) throw ValidationError("score", "score must be an integer in 1..5, got " + std::to_string(s));
  return static_cast<float>((s - 1) / 4.0);
}

float consolidate_scores(std::span<const int> raw) {
  if (raw.empty()) throw ValidationError("scores", "need at least one score");
  double acc = 0.0;
  for (int s : raw) acc += standardize_score(s);
  return static_cast<float>(acc / static_cast<double>(raw.size()));
}

float max_diff(std::span<const int> raw) {
  if (raw.empty()) throw ValidationError("scores", "need at least one score");
  float lo = 1.0f, hi = 0.0f;
  for (int s : raw) {
    const float v = standardize_score(s);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo;
}

KeywordLabels majority_vote_keywords(std::span<const KeywordLabels> label_vectors) {
  if (label_vectors.empty()) throw ValidationError("labels", "need at least one label vector");
  const std::size_t n = label_vectors.front().size();
  for (std::size_t i = 1; i < label_vectors.size(); ++i) {
    if (label_vectors[i].size() != n) {
      throw ValidationError("labels[" + std::to_string(i) + "]", "length mismatch");
    }
  }
  KeywordLabels out(n, 0);
  for (std::size_t w = 0; w < n; ++w) {
    std::size_t ones = 0;
    for (const auto& v : label_vectors) ones += v[w] ? 1 : 0;
    out[w] = (2 * ones > label_vectors.size()) ? 1 : 0;
  }
  return out;
}

MisalignmentTarget encode_misalignment_target(std::span<const std::string> prompt_words, const KeywordLabels& labels) {
  if (labels.size() != prompt_words.size()) throw ValidationError("labels", "length must equal prompt word count");
  MisalignmentTarget t;
  t.words.reserve(prompt_words.size());
  for (std::size_t i = 0; i < prompt_words.size(); ++i) {
    t.words.push_back(labels[i] ? prompt_words[i] + std::string(kMisalignedSuffix) : prompt_words[i]);
  }
  return t;
}

DecodedMisalignment decode_misalignment(std::span<const std::string> target_words,
                                        std::span<const std::string> prompt_words) {
  DecodedMisalignment out;
  out.labels.assign(prompt_words.size(), 0);
  std::size_t cursor = 0;
  for (const std::string& word : target_words) {
    const bool suffixed = word.size() > kMisalignedSuffix.size() && word.ends_with(kMisalignedSuffix);
    const std::string base = suffixed ? word.substr(0, word.size() - kMisalignedSuffix.size()) : word;
    bool matched = false;
    for (std::size_t j = cursor; j < prompt_words.size(); ++j) {
      if (suffixed && prompt_words[j] == base) {
        out.labels[j] = 1;
        out.keywords.insert(base);
      } else if (prompt_words[j] != word) {
        continue;
      }
      cursor = j + 1;
      matched = true;
      break;
    }
    if (!matched) ++out.skipped;
  }
  return out;
}

KeywordLabels record_keyword_labels(const AnnotationRecord& r) {
  KeywordLabels labels(split_words(r.prompt).size(), 0);
  for (int idx : r.misaligned_word_indices) {
    if (idx >= 0 && static_cast<std::size_t>(idx) < labels.size()) labels[idx] = 1;
  }
  return labels;
}

ConsolidatedSample consolidate_group(std::span<const AnnotationRecord> records, double radius_frac) {
  std::vector<const AnnotationRecord*> kept;
  for (const auto& r : records) {
    if (!r.skipped) kept.push_back(&r);
  }
  if (kept.empty()) throw ValidationError("records", "no non-skipped records to consolidate");
  const AnnotationRecord& first = *kept.front();
  for (const AnnotationRecord* r : kept) {
    validate_record(*r);
    if (r->image_id != first.image_id || r->prompt != first.prompt || r->width != first.width ||
        r->height != first.height) {
      throw ValidationError("records", "records of one group disagree on image_id/prompt/dimensions");
    }
  }

  ConsolidatedSample s;
  s.image_id = first.image_id;
  s.prompt = first.prompt;
  s.annotator_count = static_cast<int>(kept.size());

  std::vector<Heatmap> artifact, misalignment;
  std::vector<KeywordLabels> labels;
  std::array<std::vector<int>, 4> raw_scores;
  for (const AnnotationRecord* r : kept) {
    artifact.push_back(render_point_heatmap(r->artifact_points, r->width, r->height, radius_frac));
    misalignment.push_back(render_point_heatmap(r->misalignment_points, r->width, r->height, radius_frac));
    labels.push_back(record_keyword_labels(*r));
    for (ScoreType t : kScoreTypes) raw_scores[static_cast<int>(t)].push_back(r->score(t));
    s.artifact_points.insert(s.artifact_points.end(), r->artifact_points.begin(), r->artifact_points.end());
    s.misalignment_points.insert(s.misalignment_points.end(), r->misalignment_points.begin(),
                                 r->misalignment_points.end());
  }
  s.artifact_heatmap = consolidate_heatmaps(artifact);
  s.misalignment_heatmap = consolidate_heatmaps(misalignment);
  s.keyword_labels = majority_vote_keywords(labels);
  for (int i = 0; i < 4; ++i) s.scores[i] = consolidate_scores(raw_scores[i]);
  return s;
}

std::vector<ConsolidatedSample> consolidate_records(std::span<const AnnotationRecord> records, double radius_frac) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<AnnotationRecord>> groups;
  for (const auto& r : records) {
    if (r.skipped) continue;
    auto [it, inserted] = groups.try_emplace(r.image_id);
    if (inserted) order.push_back(r.image_id);
    it->second.push_back(r);
  }
  std::vector<ConsolidatedSample> out;
  out.reserve(order.size());
  for (const auto& id : order) out.push_back(consolidate_group(groups[id], radius_frac));
  return out;
}

}  // namespace rahf
