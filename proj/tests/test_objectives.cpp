#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fmnsed/objectives.hpp"
#include "oracles/naive_kernels.hpp"

using namespace fmnsed;

namespace {

KdBatch random_batch(std::mt19937_64& rng, const Shape& shape, double lambda) {
  KdBatch b;
  b.student_logits = oracle::random_tensor(shape, rng, -5.0f, 5.0f);
  b.teacher_probs = oracle::random_tensor(shape, rng, 0.0f, 1.0f);
  b.hard_labels = Tensor(shape);
  for (float& v : b.hard_labels.data()) v = (rng() & 1) ? 1.0f : 0.0f;
  b.lambda_kd = lambda;
  return b;
}

}  // namespace

TEST(KdLoss, ZeroLogitsAgainstHalfTeacherIsLn2) {
  KdBatch b;
  b.student_logits = Tensor({2, 250, 3}, 0.0f);
  b.teacher_probs = Tensor({2, 250, 3}, 0.5f);
  b.hard_labels = Tensor({2, 250, 3}, 1.0f);
  EXPECT_NEAR(kd_loss(b), std::log(2.0), 1e-6);
  b.lambda_kd = 0.0;
  EXPECT_NEAR(kd_loss(b), std::log(2.0), 1e-6);
}

TEST(KdLoss, LambdaEndpointsReduceToPlainBce) {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 10; ++i) {
    KdBatch b = random_batch(rng, {2, 7, 5}, 0.0);
    EXPECT_NEAR(kd_loss(b), bce_with_logits_mean(b.student_logits, b.hard_labels), 1e-12);
    b.lambda_kd = 1.0;
    EXPECT_NEAR(kd_loss(b), bce_with_logits_mean(b.student_logits, b.teacher_probs), 1e-12);
    b.lambda_kd = 0.9;
    EXPECT_NEAR(kd_loss(b),
                0.9 * bce_with_logits_mean(b.student_logits, b.teacher_probs) +
                    0.1 * bce_with_logits_mean(b.student_logits, b.hard_labels),
                1e-12);
  }
}

TEST(KdLoss, DefaultWeightIsPointNine) { EXPECT_DOUBLE_EQ(KdBatch{}.lambda_kd, 0.9); }

TEST(KdLoss, NonNegativeAndNearZeroForConfidentFit) {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 20; ++i) EXPECT_GE(kd_loss(random_batch(rng, {1, 9, 4}, 0.9)), 0.0);
  KdBatch b;
  b.hard_labels = Tensor({1, 4, 2});
  for (std::size_t k = 0; k < 8; ++k) b.hard_labels[k] = static_cast<float>(k % 2);
  b.teacher_probs = b.hard_labels;
  b.student_logits = Tensor({1, 4, 2});
  for (std::size_t k = 0; k < 8; ++k) b.student_logits[k] = k % 2 ? 30.0f : -30.0f;
  // the clamp floors each term at -log(1 - 1e-7)
  EXPECT_LT(kd_loss(b), 2e-7);
}

TEST(KdLoss, MidpointConvexInLogitSpace) {
  std::mt19937_64 rng(43);
  for (int i = 0; i < 20; ++i) {
    KdBatch a = random_batch(rng, {1, 6, 3}, 0.9);
    KdBatch b = a;
    b.student_logits = oracle::random_tensor({1, 6, 3}, rng, -5.0f, 5.0f);
    KdBatch m = a;
    for (std::size_t k = 0; k < m.student_logits.size(); ++k) {
      m.student_logits[k] = 0.5f * (a.student_logits[k] + b.student_logits[k]);
    }
    EXPECT_LE(kd_loss(m), 0.5 * (kd_loss(a) + kd_loss(b)) + 1e-9);
  }
}

TEST(KdLoss, SymmetricUnderClassPermutation) {
  std::mt19937_64 rng(44);
  const KdBatch a = random_batch(rng, {1, 5, 4}, 0.7);
  KdBatch b = a;
  const std::size_t perm[4] = {2, 0, 3, 1};
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t c = 0; c < 4; ++c) {
      b.student_logits[t * 4 + perm[c]] = a.student_logits[t * 4 + c];
      b.teacher_probs[t * 4 + perm[c]] = a.teacher_probs[t * 4 + c];
      b.hard_labels[t * 4 + perm[c]] = a.hard_labels[t * 4 + c];
    }
  }
  EXPECT_NEAR(kd_loss(a), kd_loss(b), 1e-12);
}

TEST(KdLoss, RejectsInvalidBatches) {
  std::mt19937_64 rng(45);
  KdBatch b = random_batch(rng, {1, 3, 2}, 0.9);
  b.student_logits[0] = std::nanf("");
  EXPECT_THROW(kd_loss(b), DataError);
  b = random_batch(rng, {1, 3, 2}, 0.9);
  b.teacher_probs[1] = 1.5f;
  EXPECT_THROW(kd_loss(b), DataError);
  b = random_batch(rng, {1, 3, 2}, 0.9);
  b.hard_labels[2] = 0.5f;
  EXPECT_THROW(kd_loss(b), DataError);
  b = random_batch(rng, {1, 3, 2}, 1.5);
  EXPECT_THROW(kd_loss(b), ShapeError);
  b = random_batch(rng, {1, 3, 2}, 0.9);
  b.hard_labels = Tensor({1, 3, 3});
  EXPECT_THROW(kd_loss(b), ShapeError);
  EXPECT_THROW(bce(std::nan(""), 1.0), DataError);
}

TEST(Bce, ClampsSaturatedProbabilities) {
  EXPECT_NEAR(bce(0.0, 1.0), -std::log(1e-7), 1e-9);
  EXPECT_NEAR(bce(1.0, 0.0), -std::log(1e-7), 1e-6);
  EXPECT_TRUE(std::isfinite(bce_with_logits_mean(Tensor({2}, 1e4f), Tensor({2}, 0.0f))));
}

TEST(Mixup, EndpointsAndLinearity) {
  std::mt19937_64 rng(46);
  const Tensor x1 = oracle::random_tensor({1, 8, 10}, rng);
  const Tensor x2 = oracle::random_tensor({1, 8, 10}, rng);
  const Tensor y1 = oracle::random_tensor({250, 4}, rng, 0.0f, 1.0f);
  const Tensor y2 = oracle::random_tensor({250, 4}, rng, 0.0f, 1.0f);
  auto [a, ya] = mixup(x1, x2, y1, y2, 1.0);
  EXPECT_EQ(a, x1);
  EXPECT_EQ(ya, y1);
  auto [b, yb] = mixup(x1, x2, y1, y2, 0.0);
  EXPECT_EQ(b, x2);
  EXPECT_EQ(yb, y2);
  auto [m, ym] = mixup(x1, x2, y1, y2, 0.3);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(m[i], 0.3 * x1[i] + 0.7 * x2[i], 1e-6);
  for (std::size_t i = 0; i < ym.size(); ++i) {
    EXPECT_GE(ym[i], std::min(y1[i], y2[i]) - 1e-6f);
    EXPECT_LE(ym[i], std::max(y1[i], y2[i]) + 1e-6f);
  }
  EXPECT_THROW(mixup(x1, x2, y1, y2, 1.2), ShapeError);
  EXPECT_THROW(mixup(x1, y1, y1, y2, 0.5), ShapeError);
}

TEST(Mixup, BetaDrawsAreSymmetricAndBimodal) {
  std::mt19937_64 rng(47);
  double sum = 0.0;
  int extreme = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double l = sample_mixup_lambda(rng);
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 1.0);
    sum += l;
    extreme += (l < 0.1 || l > 0.9);
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
  // Beta(0.3, 0.3) puts roughly 56% of its mass within 0.1 of the endpoints
  EXPECT_GT(static_cast<double>(extreme) / n, 0.45);
}
