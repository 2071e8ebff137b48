// SPDX-License-Identifier: Apache-2.0
// Hand-built three-annotator fixture with hand-computed consolidation.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "rahf/feedback.hpp"
#include "rahf/metrics.hpp"

namespace rahf::testing {

struct HandFixture {
  std::vector<AnnotationRecord> records;  // grouped by image, 3 per image
  std::vector<std::string> image_ids;
  std::vector<std::string> prompts;
  // Expected consolidated values, by image then ScoreType.
  std::vector<std::array<float, 4>> scores;
  std::vector<std::array<float, 4>> max_diffs;
  // Expected artifact heatmap value at probe pixels, by image.
  std::vector<std::vector<std::pair<metrics::Pixel, float>>> probes;
  std::vector<KeywordLabels> keywords;
};

/// 40x40 images, so the point disk radius is exactly 2 px. Three images:
///  - img-a: annotators click (10,10), (11,10) and (30,30); pixel (10,10)
///    is covered twice, (30,30) once, (20,20) never.
///  - img-b: all three click (20,20).
///  - img-c: no artifact points at all.
inline HandFixture hand_fixture() {
  HandFixture f;
  f.image_ids = {"img-a", "img-b", "img-c"};
  f.prompts = {"a yellow cat on a mat", "two dogs in snow", "a red car"};
  const std::array<std::array<std::array<int, 4>, 3>, 3> raw = {{
      {{{5, 4, 3, 1}, {4, 4, 3, 2}, {4, 5, 3, 3}}},
      {{{1, 1, 1, 1}, {1, 2, 5, 1}, {2, 1, 5, 1}}},
      {{{3, 3, 3, 3}, {3, 3, 3, 3}, {3, 3, 3, 3}}},
  }};
  const std::array<std::array<std::vector<Point>, 3>, 3> art = {{
      {{{{10, 10}}, {{11, 10}}, {{30, 30}}}},
      {{{{20, 20}}, {{20, 20}}, {{20, 20}}}},
      {{{}, {}, {}}},
  }};
  const std::array<std::array<std::vector<int>, 3>, 3> words = {{
      {{{1}, {1, 2}, {}}},
      {{{}, {}, {}}},
      {{{1}, {1}, {2}}},
  }};
  for (int i = 0; i < 3; ++i) {
    for (int a = 0; a < 3; ++a) {
      AnnotationRecord r;
      r.image_id = f.image_ids[i];
      r.prompt = f.prompts[i];
      r.annotator_id = "annotator" + std::to_string(a);
      r.width = 40;
      r.height = 40;
      r.artifact_points = art[i][a];
      if (i == 1 && a == 0) r.misalignment_points = {{5, 35}};
      r.misaligned_word_indices = words[i][a];
      r.scores = raw[i][a];
      f.records.push_back(r);
    }
  }
  // (s - 1) / 4 averaged by hand.
  f.scores = {{
      {5.0f / 6.0f, 5.0f / 6.0f, 0.5f, 1.0f / 4.0f},
      {1.0f / 12.0f, 1.0f / 12.0f, 2.0f / 3.0f, 0.0f},
      {0.5f, 0.5f, 0.5f, 0.5f},
  }};
  f.max_diffs = {{
      {0.25f, 0.25f, 0.0f, 0.5f},
      {0.25f, 0.25f, 1.0f, 0.0f},
      {0.0f, 0.0f, 0.0f, 0.0f},
  }};
  f.probes = {
      {{{10, 10}, 2.0f / 3.0f}, {{9, 10}, 2.0f / 3.0f}, {{13, 10}, 1.0f / 3.0f}, {{8, 10}, 1.0f / 3.0f},
       {{30, 30}, 1.0f / 3.0f}, {{20, 20}, 0.0f}, {{11, 12}, 1.0f / 3.0f}, {{12, 12}, 0.0f}},
      {{{20, 20}, 1.0f}, {{22, 20}, 1.0f}, {{23, 20}, 0.0f}, {{21, 21}, 1.0f}, {{22, 22}, 0.0f}},
      {{{0, 0}, 0.0f}, {{20, 20}, 0.0f}},
  };
  f.keywords = {{0, 1, 0, 0, 0, 0}, {0, 0, 0, 0}, {0, 1, 0}};
  return f;
}

}  // namespace rahf::testing
