// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "metric_cases.hpp"
#include "oracles.hpp"
#include "rahf/metrics.hpp"

namespace rahf {
namespace {

using namespace metrics;

TEST(Correlation, KnownValues) {
  const std::vector<double> x = {1, 2, 3, 4}, y = {2, 4, 6, 8}, z = {4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(plcc(x, y), 1.0);
  EXPECT_DOUBLE_EQ(plcc(x, z), -1.0);
  EXPECT_DOUBLE_EQ(srcc(x, std::vector<double>{1, 10, 100, 1000}), 1.0);
  EXPECT_THROW(plcc(x, std::vector<double>{1, 1, 1, 1}), UndefinedMetric);
  EXPECT_THROW(plcc(x, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST(Correlation, AverageRanksSplitTies) {
  const std::vector<double> x = {10, 20, 10, 30};
  EXPECT_EQ(average_ranks(x), (std::vector<double>{1.5, 3, 1.5, 4}));
}

TEST(Correlation, MatchesOracleOnRandomSeries) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.uniform_int(2, 20);
    const auto x = testing::random_series(rng, n), y = testing::random_series(rng, n);
    const auto po = oracle::pearson(x, y), so = oracle::spearman(x, y);
    if (po) EXPECT_NEAR(plcc(x, y), *po, 1e-9);
    else EXPECT_THROW(plcc(x, y), UndefinedMetric);
    if (so) EXPECT_NEAR(srcc(x, y), *so, 1e-9);
  }
}

TEST(SaliencyMetrics, MatchOraclesOnRandomMaps) {
  Rng rng(2);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int w = rng.uniform_int(2, 12), h = rng.uniform_int(2, 12);
    const Heatmap gt = testing::random_heatmap(rng, w, h, 0.6);
    const Heatmap pred = testing::random_heatmap(rng, w, h, 0.2);
    const auto fix = testing::random_points(rng, w, h, rng.uniform_int(1, 5));
    if (gt.all_zero()) continue;
    ++compared;
    if (auto o = oracle::cc(pred, gt)) EXPECT_NEAR(cc(pred, gt), *o, 1e-6);
    EXPECT_NEAR(kld(gt, pred), oracle::kld(gt, pred, kKldEpsilon), 1e-4);
    EXPECT_NEAR(sim(pred, gt), oracle::sim(pred, gt), 1e-6);
    if (auto o = oracle::nss(pred, fix)) EXPECT_NEAR(nss(pred, fix), *o, 1e-6);
    if (auto o = oracle::auc_judd(pred, fix)) EXPECT_NEAR(auc_judd(pred, fix), *o, 1e-6);
  }
  EXPECT_GT(compared, 100);
}

TEST(SaliencyMetrics, UndefinedInputs) {
  const Heatmap zero(4, 4), ramp(4, 4, std::vector<float>(16, 0.5f));
  EXPECT_THROW(cc(ramp, zero), UndefinedMetric);
  EXPECT_THROW(kld(zero, ramp), UndefinedMetric);
  EXPECT_THROW(nss(ramp, std::vector<Point>{{1, 1}}), UndefinedMetric);
  EXPECT_THROW(nss(ramp, std::vector<Point>{}), UndefinedMetric);
  EXPECT_THROW(auc_judd(ramp, std::vector<Point>{{9, 1}}), UndefinedMetric);
  EXPECT_THROW(cc(Heatmap(3, 3), Heatmap(4, 4)), std::invalid_argument);
}

TEST(SaliencyMetrics, PerfectPredictionBounds) {
  Heatmap gt(6, 6);
  gt.at(2, 3) = 1.0f;
  const std::vector<Point> fix = {{2.0f, 3.0f}};
  EXPECT_DOUBLE_EQ(cc(gt, gt), 1.0);
  EXPECT_NEAR(kld(gt, gt), 0.0, 1e-6);
  EXPECT_DOUBLE_EQ(sim(gt, gt), 1.0);
  EXPECT_DOUBLE_EQ(auc_judd(gt, fix), 1.0);
  // Constant-zero prediction: KLD uses a uniform prediction.
  EXPECT_NEAR(kld(gt, Heatmap(6, 6)), std::log(36.0), 1e-5);
}

TEST(SaliencyMetrics, AucOfConstantPredictionIsHalf) {
  const Heatmap flat(5, 5, std::vector<float>(25, 0.3f));
  EXPECT_DOUBLE_EQ(auc_judd(flat, std::vector<Point>{{1, 1}, {3, 2}}), 0.5);
}

TEST(TokenPrf, MatchesOracle) {
  Rng rng(3);
  std::vector<LabelPair> samples;
  std::vector<std::pair<KeywordLabels, KeywordLabels>> plain;
  for (int i = 0; i < 50; ++i) {
    KeywordLabels a, b;
    for (int k = rng.uniform_int(1, 10); k > 0; --k) {
      a.push_back(rng.bernoulli(0.3));
      b.push_back(rng.bernoulli(0.3));
    }
    samples.push_back({a, b});
    plain.emplace_back(a, b);
  }
  const auto r = token_prf(samples);
  const auto o = oracle::token_prf(plain);
  EXPECT_NEAR(r.precision, o.precision, 1e-12);
  EXPECT_NEAR(r.recall, o.recall, 1e-12);
  EXPECT_NEAR(r.f1, o.f1, 1e-12);
}

TEST(TokenPrf, LengthMismatchThrows) {
  const std::vector<LabelPair> s = {{{1, 0}, {1}}};
  EXPECT_THROW(token_prf(s), std::invalid_argument);
}

TEST(EvaluateHeatmaps, SplitsByEmptyGroundTruth) {
  Heatmap empty(4, 4), marked(4, 4);
  marked.at(1, 1) = 1.0f;
  Heatmap pred(4, 4, std::vector<float>(16, 0.1f));
  pred.at(1, 1) = 0.9f;
  const std::vector<HeatmapEvalInput> in = {{pred, empty, {}}, {pred, marked, {}}};
  const auto r = evaluate_heatmaps(in);
  EXPECT_EQ(r.count_empty_gt, 1u);
  EXPECT_EQ(r.count_nonempty_gt, 1u);
  ASSERT_TRUE(r.mse_empty_gt && r.mse_all && r.auc_judd);
  EXPECT_NEAR(*r.mse_empty_gt, heatmap_mse(pred, empty), 1e-12);
  // GT-max fallback fixation at (1,1) separates perfectly.
  EXPECT_DOUBLE_EQ(*r.auc_judd, 1.0);
}

TEST(EvaluateScores, UndefinedCorrelationIsAbsent) {
  const std::vector<std::array<float, 4>> pred = {{0.1f, 0.5f, 0.2f, 0.3f}, {0.2f, 0.5f, 0.4f, 0.1f}};
  const std::vector<std::array<float, 4>> gt = {{0.0f, 0.1f, 0.3f, 0.4f}, {1.0f, 0.2f, 0.6f, 0.5f}};
  const auto r = evaluate_scores(pred, gt);
  EXPECT_FALSE(r.per_type[1].plcc.has_value());
  ASSERT_TRUE(r.per_type[0].plcc.has_value());
  EXPECT_DOUBLE_EQ(*r.per_type[0].plcc, 1.0);
  EXPECT_DOUBLE_EQ(*r.per_type[3].srcc, -1.0);
}

TEST(EvalReport, TextUsesNaForMissingValues) {
  EvalReport r;
  const std::string text = to_text(r);
  EXPECT_NE(text.find("score.plausibility.plcc=na\n"), std::string::npos);
  EXPECT_NE(text.find("samples=0\n"), std::string::npos);
}

}  // namespace
}  // namespace rahf
