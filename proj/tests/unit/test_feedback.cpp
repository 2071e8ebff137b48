// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rahf/feedback.hpp"
#include "rahf/tensor.hpp"

namespace rahf {
namespace {

AnnotationRecord valid_record() {
  AnnotationRecord r;
  r.image_id = "x";
  r.prompt = "a cat on a mat";
  r.annotator_id = "ann";
  r.width = 32;
  r.height = 24;
  r.artifact_points = {{3.0f, 4.0f}};
  r.misaligned_word_indices = {1};
  r.scores = {1, 2, 3, 4};
  return r;
}

std::string failing_field(const AnnotationRecord& r) {
  try {
    validate_record(r);
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "";
}

TEST(ValidateRecord, AcceptsAWellFormedRecord) { EXPECT_NO_THROW(validate_record(valid_record())); }

TEST(ValidateRecord, NamesTheOffendingField) {
  auto r = valid_record();
  r.scores[static_cast<int>(ScoreType::kAesthetics)] = 6;
  EXPECT_EQ(failing_field(r), "scores.aesthetics");
  r = valid_record();
  r.artifact_points.push_back({32.0f, 1.0f});
  EXPECT_EQ(failing_field(r), "artifact_points[1]");
  r = valid_record();
  r.misaligned_word_indices = {5};
  EXPECT_EQ(failing_field(r).rfind("misaligned_word_indices", 0), 0u);
  r = valid_record();
  r.width = 0;
  EXPECT_EQ(failing_field(r), "width");
}

TEST(SplitWords, SplitsOnWhitespaceRunsAndKeepsPunctuation) {
  EXPECT_EQ(split_words("  a  cat,\tsits\n"), (std::vector<std::string>{"a", "cat,", "sits"}));
  EXPECT_TRUE(split_words("   ").empty());
}

TEST(Scores, StandardizeMapsLikertOntoUnitInterval) {
  EXPECT_EQ(standardize_score(1), 0.0f);
  EXPECT_EQ(standardize_score(3), 0.5f);
  EXPECT_EQ(standardize_score(5), 1.0f);
  EXPECT_THROW(standardize_score(0), ValidationError);
  EXPECT_THROW(standardize_score(6), ValidationError);
}

TEST(Scores, ConsolidateAndMaxDiffOnHandValues) {
  const std::vector<int> raw = {2, 5, 4};
  EXPECT_FLOAT_EQ(consolidate_scores(raw), (0.25f + 1.0f + 0.75f) / 3.0f);
  EXPECT_FLOAT_EQ(max_diff(raw), 0.75f);
}

TEST(PointHeatmap, MatchesBruteForceDiskScan) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = rng.uniform_int(5, 30), h = rng.uniform_int(5, 30);
    std::vector<Point> pts;
    for (int k = rng.uniform_int(0, 4); k > 0; --k) {
      pts.push_back({static_cast<float>(rng.uniform(0, w - 1e-3)), static_cast<float>(rng.uniform(0, h - 1e-3))});
    }
    const double frac = rng.uniform(0.02, 0.3);
    const Heatmap m = render_point_heatmap(pts, w, h, frac);
    const auto expected = oracle::disk_scan(pts, w, h, frac);
    for (std::size_t i = 0; i < expected.size(); ++i) ASSERT_EQ(m.values()[i], expected[i]) << "trial " << trial;
  }
}

TEST(PointHeatmap, RadiusTwoDiskHasThirteenPixels) {
  const std::vector<Point> p = {{10.0f, 10.0f}};
  const Heatmap m = render_point_heatmap(p, 40, 40, 1.0 / 20.0);
  std::size_t on = 0;
  for (float v : m.values()) on += v == 1.0f;
  EXPECT_EQ(on, 13u);
}

TEST(PointHeatmap, RejectsPointsOutsideTheImage) {
  const std::vector<Point> p = {{-0.5f, 1.0f}};
  EXPECT_THROW(render_point_heatmap(p, 8, 8, 0.1), ValidationError);
}

TEST(Consolidation, HandFixtureValues) {
  const auto f = testing::hand_fixture();
  const auto samples = consolidate_records(f.records);
  ASSERT_EQ(samples.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& s = samples[i];
    EXPECT_EQ(s.image_id, f.image_ids[i]);
    EXPECT_EQ(s.annotator_count, 3);
    for (int t = 0; t < 4; ++t) EXPECT_FLOAT_EQ(s.scores[t], f.scores[i][t]) << i << "/" << t;
    for (const auto& [px, v] : f.probes[i]) EXPECT_FLOAT_EQ(s.artifact_heatmap.at(px.x, px.y), v) << i;
    EXPECT_EQ(s.keyword_labels, f.keywords[i]);
  }
  EXPECT_TRUE(samples[2].artifact_heatmap.all_zero());
  EXPECT_FLOAT_EQ(samples[1].misalignment_heatmap.at(5, 35), 1.0f / 3.0f);
}

TEST(Consolidation, ValuesAreMultiplesOfOneThird) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AnnotationRecord> group;
    for (int a = 0; a < 3; ++a) {
      auto r = valid_record();
      r.annotator_id = "a" + std::to_string(a);
      r.artifact_points.clear();
      for (int k = rng.uniform_int(0, 3); k > 0; --k) {
        r.artifact_points.push_back({static_cast<float>(rng.uniform(0, 31.9)), static_cast<float>(rng.uniform(0, 23.9))});
      }
      group.push_back(r);
    }
    const auto s = consolidate_group(group);
    const std::set<float> allowed = {0.0f, 1.0f / 3.0f, 2.0f / 3.0f, 1.0f};
    for (float v : s.artifact_heatmap.values()) ASSERT_TRUE(allowed.count(v)) << v;
  }
}

TEST(Consolidation, SkippedRecordsAreDropped) {
  auto a = valid_record(), b = valid_record();
  b.annotator_id = "other";
  b.skipped = true;
  b.scores = {};
  const std::vector<AnnotationRecord> rs = {a, b};
  const auto out = consolidate_records(rs);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].annotator_count, 1);
  EXPECT_THROW(consolidate_group(std::vector<AnnotationRecord>{b}), ValidationError);
}

TEST(Consolidation, DisagreeingGroupIsRejected) {
  auto a = valid_record(), b = valid_record();
  b.prompt = "a dog";
  b.misaligned_word_indices.clear();
  EXPECT_THROW(consolidate_group(std::vector<AnnotationRecord>{a, b}), ValidationError);
}

TEST(KeywordVote, StrictMajority) {
  const std::vector<KeywordLabels> v = {{1, 1, 0}, {1, 0, 0}, {0, 1, 1}};
  EXPECT_EQ(majority_vote_keywords(v), (KeywordLabels{1, 1, 0}));
  const std::vector<KeywordLabels> two = {{1, 0}, {0, 1}};
  EXPECT_EQ(majority_vote_keywords(two), (KeywordLabels{0, 0}));
}

TEST(MisalignmentTarget, SuffixesMisalignedWords) {
  const auto words = split_words("a yellow cat");
  const auto t = encode_misalignment_target(words, {0, 1, 0});
  EXPECT_EQ(t.text(), "a yellow_0 cat");
}

TEST(MisalignmentTarget, DecodeInvertsEncode) {
  Rng rng(8);
  const std::vector<std::string> vocab = {"a", "cat", "red", "the", "on"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> words;
    KeywordLabels labels;
    for (int k = rng.uniform_int(1, 8); k > 0; --k) {
      words.push_back(vocab[rng.uniform_int(0, 4)]);
      labels.push_back(rng.bernoulli(0.4));
    }
    const auto t = encode_misalignment_target(words, labels);
    const auto d = decode_misalignment(t.words, words);
    EXPECT_EQ(d.labels, labels);
    EXPECT_EQ(d.skipped, 0);
  }
}

TEST(MisalignmentTarget, DecodeCountsUnmatchedWords) {
  const auto prompt = split_words("a red car");
  const auto d = decode_misalignment(split_words("a blue_0 car"), prompt);
  EXPECT_EQ(d.labels, (KeywordLabels{0, 0, 0}));
  EXPECT_EQ(d.skipped, 1);
}

}  // namespace
}  // namespace rahf
