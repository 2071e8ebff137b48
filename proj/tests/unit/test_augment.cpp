// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "rahf/training.hpp"
#include "synthetic.hpp"

namespace rahf {
namespace {

Image smooth_image(int w, int h) {
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = 0.2f + 0.5f * x / w;
      img.at(x, y, 1) = 0.3f + 0.4f * y / h;
      img.at(x, y, 2) = 0.5f;
    }
  return img;
}

TEST(Dct, InverseRecoversBlock) {
  Rng rng(1);
  std::array<double, 64> b{};
  for (double& v : b) v = rng.uniform(-128, 127);
  const auto back = idct8x8(dct8x8(b));
  for (int i = 0; i < 64; ++i) EXPECT_NEAR(back[i], b[i], 1e-9);
}

TEST(Dct, ConstantBlockHasOnlyDc) {
  std::array<double, 64> b;
  b.fill(10.0);
  const auto c = dct8x8(b);
  EXPECT_NEAR(c[0], 80.0, 1e-9);  // orthonormal: 8 * mean
  for (int i = 1; i < 64; ++i) EXPECT_NEAR(c[i], 0.0, 1e-9);
}

TEST(Jpeg, QualityFiftyIsTheBaseTable) {
  const auto q = jpeg_quant_table(50);
  EXPECT_EQ((std::array<int, 8>{q[0], q[1], q[2], q[3], q[4], q[5], q[6], q[7]}),
            (std::array<int, 8>{16, 11, 10, 16, 24, 40, 51, 61}));
  for (int v : jpeg_quant_table(100)) EXPECT_EQ(v, 1);
}

TEST(Jpeg, HighQualityIsNearIdentityOnSmoothImages) {
  const Image img = smooth_image(20, 13);
  const Image out = jpeg_emulate(img, 100);
  ASSERT_EQ(out.width(), 20);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.storage()[i], img.storage()[i], 3.0f / 255.0f);
  const Image low = jpeg_emulate(img, 5);
  double err = 0;
  for (std::size_t i = 0; i < img.size(); ++i) err += std::abs(low.storage()[i] - img.storage()[i]);
  EXPECT_GT(err / img.size(), 1e-3);
}

TEST(Color, HsvRoundTrip) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const float r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
    const auto hsv = rgb_to_hsv(r, g, b);
    const auto rgb = hsv_to_rgb(hsv[0], hsv[1], hsv[2]);
    EXPECT_NEAR(rgb[0], r, 1e-5);
    EXPECT_NEAR(rgb[1], g, 1e-5);
    EXPECT_NEAR(rgb[2], b, 1e-5);
  }
}

TEST(Color, AdjustmentsAtNeutralSettingsAreIdentity) {
  const Image img = smooth_image(6, 6);
  for (float d : {adjust_brightness(img, 0.0).storage()[5], adjust_contrast(img, 1.0).storage()[5],
                  adjust_hue(img, 0.0).storage()[5], adjust_saturation(img, 1.0).storage()[5]}) {
    EXPECT_NEAR(d, img.storage()[5], 1e-5);
  }
}

TEST(Color, GrayscaleUsesLuma) {
  Image img(1, 1, 3);
  img.at(0, 0, 0) = 1.0f;
  const Image g = to_grayscale(img);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(g.at(0, 0, c), 0.2989f, 1e-6);
}

TEST(Color, ContrastScalesAroundChannelMean) {
  Image img(2, 1, 3, 0.0f);
  img.at(1, 0, 0) = 1.0f;
  const Image c = adjust_contrast(img, 0.5);
  EXPECT_NEAR(c.at(0, 0, 0), 0.25f, 1e-6);
  EXPECT_NEAR(c.at(1, 0, 0), 0.75f, 1e-6);
}

TEST(Crop, HeatmapsFollowTheImage) {
  const auto corpus = testing::make_corpus(3, 1, 64);
  TrainingSample s = testing::training_samples(corpus, 64)[0];
  // Mark one pixel and verify it lands where the crop maps it.
  Heatmap h(64, 64);
  h.at(40, 20) = 1.0f;
  s.heatmaps[0] = h;
  const TrainingSample c = crop_sample(s, CropBox{32, 0, 32, 32});
  EXPECT_EQ(c.image.width(), 64);
  float best = -1;
  int bx = 0, by = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (c.heatmaps[0]->at(x, y) > best) {
        best = c.heatmaps[0]->at(x, y);
        bx = x;
        by = y;
      }
  EXPECT_NEAR(bx, 16, 2);
  EXPECT_NEAR(by, 40, 2);
}

TEST(Augment, DisabledConfigIsIdentity) {
  const auto corpus = testing::make_corpus(3, 1, 64);
  const TrainingSample s = testing::training_samples(corpus, 64)[0];
  Rng rng(1);
  const TrainingSample out = augment(s, AugmentConfig::disabled(), rng);
  EXPECT_EQ(out.image.storage(), s.image.storage());
  EXPECT_EQ(*out.heatmaps[0], *s.heatmaps[0]);
}

TEST(Augment, OutputStaysInRangeAndIsSeeded) {
  const auto corpus = testing::make_corpus(3, 1, 64);
  const TrainingSample s = testing::training_samples(corpus, 64)[0];
  AugmentConfig cfg;
  cfg.crop_prob = cfg.photometric_prob = cfg.grayscale_prob = 1.0;
  Rng a(5), b(5);
  const TrainingSample x = augment(s, cfg, a), y = augment(s, cfg, b);
  EXPECT_EQ(x.image.storage(), y.image.storage());
  for (float v : x.image.storage()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  for (float v : x.heatmaps[0]->values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  EXPECT_EQ(x.scores, s.scores);
}

}  // namespace
}  // namespace rahf
