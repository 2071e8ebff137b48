// SPDX-License-Identifier: Apache-2.0
// Seeded synthetic annotation corpora for tests.
#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <vector>

#include "rahf/feedback.hpp"
#include "rahf/image.hpp"
#include "rahf/tensor.hpp"
#include "rahf/training.hpp"

namespace rahf::testing {

struct SyntheticCorpus {
  std::vector<AnnotationRecord> records;
  std::map<std::string, Image> images;  // by image_id
  std::vector<ConsolidatedSample> samples;
};

inline const std::vector<std::string>& synthetic_words() {
  static const std::vector<std::string> words = {"a",     "red",   "blue",  "cat",    "dog",    "sits",
                                                 "on",    "the",   "green", "chair",  "two",    "birds",
                                                 "over",  "lake",  "tall",  "tree",   "yellow", "car"};
  return words;
}

/// `n` image-prompt pairs, each annotated by `annotators` raters whose
/// points jitter around one artifact and one misalignment center. Artifact
/// and misalignment centers are painted into the image so the targets are
/// learnable from pixels.
inline SyntheticCorpus make_corpus(std::uint64_t seed, int n, int size = 64, int annotators = 3) {
  SyntheticCorpus out;
  Rng rng(seed);
  const auto& words = synthetic_words();
  for (int i = 0; i < n; ++i) {
    const std::string id = "img" + std::to_string(i);
    const int len = rng.uniform_int(4, 6);
    std::vector<std::string> prompt_words;
    for (int k = 0; k < len; ++k) {
      prompt_words.push_back(words[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(words.size()) - 1))]);
    }
    const std::string prompt = join_words(prompt_words);

    Image img(size, size, 3);
    const float base[3] = {static_cast<float>(rng.uniform(0.1, 0.5)), static_cast<float>(rng.uniform(0.1, 0.5)),
                           static_cast<float>(rng.uniform(0.1, 0.5))};
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = base[c] + 0.1f * static_cast<float>(x + y) / (2.0f * size);
      }
    }
    const Point art{static_cast<float>(rng.uniform(0.2, 0.8) * size), static_cast<float>(rng.uniform(0.2, 0.8) * size)};
    const Point mis{static_cast<float>(rng.uniform(0.2, 0.8) * size), static_cast<float>(rng.uniform(0.2, 0.8) * size)};
    const bool has_mis = rng.bernoulli(0.75);
    auto paint = [&](const Point& p, const float rgb[3]) {
      const int r = std::max(2, size / 16);
      for (int y = static_cast<int>(p.y) - r; y <= static_cast<int>(p.y) + r; ++y) {
        for (int x = static_cast<int>(p.x) - r; x <= static_cast<int>(p.x) + r; ++x) {
          if (x < 0 || y < 0 || x >= size || y >= size) continue;
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = rgb[c];
        }
      }
    };
    const float art_rgb[3] = {0.95f, 0.9f, 0.2f};
    const float mis_rgb[3] = {0.2f, 0.9f, 0.95f};
    paint(art, art_rgb);
    if (has_mis) paint(mis, mis_rgb);
    out.images.emplace(id, img);

    std::vector<int> misaligned;
    for (int k = 0; k < len; ++k) {
      if (has_mis && rng.bernoulli(0.35)) misaligned.push_back(k);
    }
    std::array<int, 4> centre_scores{};
    for (int& s : centre_scores) s = rng.uniform_int(1, 5);

    for (int a = 0; a < annotators; ++a) {
      AnnotationRecord r;
      r.image_id = id;
      r.prompt = prompt;
      r.annotator_id = "rater" + std::to_string(a);
      r.width = size;
      r.height = size;
      auto jitter = [&](const Point& p) {
        return Point{std::clamp(static_cast<float>(p.x + rng.uniform(-1.5, 1.5)), 0.0f, size - 1.0f),
                     std::clamp(static_cast<float>(p.y + rng.uniform(-1.5, 1.5)), 0.0f, size - 1.0f)};
      };
      r.artifact_points.push_back(jitter(art));
      if (has_mis) r.misalignment_points.push_back(jitter(mis));
      r.misaligned_word_indices = misaligned;
      for (int s = 0; s < 4; ++s) r.scores[s] = std::clamp(centre_scores[s] + rng.uniform_int(-1, 1), 1, 5);
      out.records.push_back(std::move(r));
    }
  }
  out.samples = consolidate_records(out.records);
  return out;
}

inline std::vector<TrainingSample> training_samples(const SyntheticCorpus& corpus, int image_size) {
  std::vector<TrainingSample> out;
  for (const auto& s : corpus.samples) out.push_back(make_training_sample(s, corpus.images.at(s.image_id), image_size));
  return out;
}

inline std::vector<std::string> corpus_prompts(const SyntheticCorpus& corpus) {
  std::vector<std::string> out;
  for (const auto& s : corpus.samples) out.push_back(s.prompt);
  return out;
}

}  // namespace rahf::testing
