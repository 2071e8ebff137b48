// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "rahf/autodiff.hpp"

namespace rahf {
namespace {

using ad::Tape;
using ad::Var;

TEST(Tensor, RejectsDataShapeMismatch) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), std::invalid_argument);
  EXPECT_EQ(Tensor({2, 3, 4}).rows(), 6);
  EXPECT_EQ(Tensor({2, 3, 4}).cols(), 4);
}

TEST(Rng, SplitStreamsAreStableAndDistinct) {
  const Rng root(42);
  Rng a = root.split({1, 2}), b = root.split({1, 2}), c = root.split({2, 1});
  const double va = a.uniform();
  EXPECT_EQ(va, b.uniform());
  EXPECT_NE(va, c.uniform());
}

TEST(Rng, TruncatedNormalStaysInsideTwoSigma) {
  Rng r(5);
  for (int i = 0; i < 2000; ++i) EXPECT_LE(std::abs(r.truncated_normal(0.02)), 0.04);
}

TEST(Autodiff, MatmulForwardMatchesHandProduct) {
  Tape t(false);
  const Var a = t.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  const Var b = t.constant(Tensor({2, 2}, {5, 6, 7, 8}));
  const Tensor& c = ad::matmul(a, b).value();
  EXPECT_EQ(c.storage(), (std::vector<float>{19, 22, 43, 50}));
}

TEST(Autodiff, InferenceTapeHasNoGradients) {
  Tape t(false);
  const Var x = t.variable(Tensor({3}, 1.0f));
  EXPECT_FALSE(t.requires_grad(x));
  EXPECT_FALSE(t.requires_grad(ad::square(x)));
}

TEST(Autodiff, GradientAccumulatesAcrossUses) {
  Tape t;
  const Var x = t.variable(Tensor({1}, 3.0f));
  t.backward(ad::add(ad::mul(x, x), x));  // d/dx (x^2 + x) = 7
  EXPECT_FLOAT_EQ(t.grad(x)[0], 7.0f);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  Tape t;
  const Var c = t.constant(Tensor({2}, 2.0f));
  const Var x = t.variable(Tensor({2}, 1.0f));
  t.backward(ad::sum(ad::mul(c, x)));
  EXPECT_FALSE(t.requires_grad(c));
  EXPECT_FLOAT_EQ(t.grad(x)[1], 2.0f);
}

TEST(Autodiff, ConvTransposeIsAdjointOfConv) {
  // <conv(x), y> == <x, convT(y)> with zero bias.
  Rng r(3);
  const Tensor x = testing::random_tensor({2, 7, 7}, r);
  const Tensor w = testing::random_tensor({3, 2, 3, 3}, r);
  Tape t(false);
  const Var cx = ad::conv2d(t.constant(x), t.constant(w), t.constant(Tensor({3})), 2, 1);
  const Tensor y = testing::random_tensor(cx.shape(), r);
  const Var ty = ad::conv_transpose2d(t.constant(y), t.constant(w), t.constant(Tensor({2})), 2, 1, 0);
  ASSERT_EQ(ty.shape(), x.shape());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += cx.value()[i] * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * ty.value()[i];
  EXPECT_NEAR(lhs, rhs, 1e-3 * std::max(1.0, std::abs(lhs)));
}

TEST(Autodiff, AttentionIgnoresMaskedKeys) {
  Rng r(9);
  const Tensor q = testing::random_tensor({2, 4}, r), k = testing::random_tensor({3, 4}, r);
  Tensor v = testing::random_tensor({3, 4}, r);
  const std::vector<std::uint8_t> valid = {1, 0, 1};
  Tape t(false);
  const Tensor a = ad::attention(t.constant(q), t.constant(k), t.constant(v), 2, valid).value();
  for (int c = 0; c < 4; ++c) v.storage()[4 + c] += 100.0f;
  const Tensor b = ad::attention(t.constant(q), t.constant(k), t.constant(v), 2, valid).value();
  EXPECT_EQ(a, b);
}

TEST(Autodiff, CrossEntropyAllIgnoredIsZero) {
  Tape t(false);
  const std::vector<int> targets = {0, 0};
  EXPECT_EQ(ad::cross_entropy(t.constant(Tensor({2, 3}, 0.5f)), targets, 0).value()[0], 0.0f);
}

TEST(Autodiff, CrossEntropyUniformLogitsIsLogV) {
  Tape t(false);
  const std::vector<int> targets = {1, 2};
  EXPECT_NEAR(ad::cross_entropy(t.constant(Tensor({2, 5}, 0.0f)), targets).value()[0], std::log(5.0), 1e-6);
}

TEST(Autodiff, ShapeErrorsAreReported) {
  Tape t(false);
  EXPECT_THROW(ad::matmul(t.constant(Tensor({2, 3})), t.constant(Tensor({2, 3}))), std::invalid_argument);
  EXPECT_THROW(ad::add(t.constant(Tensor({2})), t.constant(Tensor({3}))), std::invalid_argument);
}

TEST(FiniteDiff, FlagsAWrongGradient) {
  std::vector<float> x = {1.0f, 2.0f};
  const std::vector<float> wrong = {2.0f, 0.0f};  // true gradient of x0^2 + x1^2 is (2, 4)
  const std::vector<std::size_t> coords = {0, 1};
  auto f = [&] { return static_cast<double>(x[0]) * x[0] + static_cast<double>(x[1]) * x[1]; };
  const auto r = ad::finite_diff_check(f, x, wrong, coords, 1e-2f, 1e-3);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.worst_index, 1u);
  EXPECT_EQ(x, (std::vector<float>{1.0f, 2.0f}));
}

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  Rng rng(11);
  const auto cases = testing::primitive_cases(rng);
  ASSERT_LT(GetParam(), cases.size());
  const auto& pc = cases[GetParam()];
  for (std::size_t which = 0; which < pc.inputs.size(); ++which) {
    const auto r = testing::check_primitive(pc, which, rng, 1e-2f, 1e-3);
    EXPECT_TRUE(r.pass) << pc.name << " input " << which << " max_rel_error " << r.max_rel_error << " at "
                        << r.worst_index << " " << r.message;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient, ::testing::Range<std::size_t>(0, [] {
                           Rng rng(11);
                           return testing::primitive_cases(rng).size();
                         }()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           Rng rng(11);
                           return testing::primitive_cases(rng)[info.param].name;
                         });

}  // namespace
}  // namespace rahf
