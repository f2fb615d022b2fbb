#pragma once

// Training objectives as plain computations: frame-wise distillation loss
// and mixup. No optimiser or training loop lives here.

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "fmnsed/kernels.hpp"

namespace fmnsed {

inline constexpr double kBceClamp = 1e-7;
inline constexpr double kDefaultLambdaKd = 0.9;
inline constexpr double kMixupBeta = 0.3;

struct KdBatch {
  Tensor student_logits;  ///< [B, 250, C]
  Tensor teacher_probs;   ///< [B, 250, C] in [0, 1]
  Tensor hard_labels;     ///< [B, 250, C] in {0, 1}
  double lambda_kd = kDefaultLambdaKd;

  void validate() const {
    if (student_logits.shape() != teacher_probs.shape() || student_logits.shape() != hard_labels.shape()) {
      throw ShapeError("KdBatch tensors must share one shape: " + shape_str(student_logits.shape()) + ", " +
                       shape_str(teacher_probs.shape()) + ", " + shape_str(hard_labels.shape()));
    }
    if (!(lambda_kd >= 0.0 && lambda_kd <= 1.0)) throw ShapeError("lambda_kd must lie in [0, 1]");
    for (float v : student_logits.data()) {
      if (std::isnan(v)) throw DataError("student logits contain NaN");
    }
    for (float v : teacher_probs.data()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw DataError("teacher probabilities must lie in [0, 1]");
    }
    for (float v : hard_labels.data()) {
      if (v != 0.0f && v != 1.0f) throw DataError("hard labels must be 0 or 1");
    }
  }
};

/// -[t log p + (1 - t) log(1 - p)] with p clamped to [1e-7, 1 - 1e-7].
inline double bce(double p, double target) {
  if (std::isnan(p) || std::isnan(target)) throw DataError("bce: NaN input");
  p = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

/// Mean BCE between sigmoid(logits) and targets over every element.
inline double bce_with_logits_mean(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) throw ShapeError("bce: shape mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += bce(sigmoid(static_cast<double>(logits[i])), targets[i]);
  return sum / static_cast<double>(logits.size());
}

/// lambda * BCE(student, teacher) + (1 - lambda) * BCE(student, hard labels),
/// averaged over batch, frames and classes.
inline double kd_loss(const KdBatch& b) {
  b.validate();
  const double lam = b.lambda_kd;
  double sum = 0.0;
  for (std::size_t i = 0; i < b.student_logits.size(); ++i) {
    const double p = sigmoid(static_cast<double>(b.student_logits[i]));
    sum += lam * bce(p, b.teacher_probs[i]) + (1.0 - lam) * bce(p, b.hard_labels[i]);
  }
  return sum / static_cast<double>(b.student_logits.size());
}

/// lam * a + (1 - lam) * b elementwise.
inline Tensor mix(const Tensor& a, const Tensor& b, double lam) {
  if (a.shape() != b.shape()) throw ShapeError("mixup: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = static_cast<float>(lam * a[i] + (1.0 - lam) * b[i]);
  }
  return out;
}

inline std::pair<Tensor, Tensor> mixup(const Tensor& x1, const Tensor& x2, const Tensor& y1, const Tensor& y2,
                                       double lam) {
  if (!(lam >= 0.0 && lam <= 1.0)) throw ShapeError("mixup coefficient must lie in [0, 1]");
  return {mix(x1, x2, lam), mix(y1, y2, lam)};
}

/// Beta(a, a) draw as G1 / (G1 + G2) with Gamma(a, 1) variates.
template <typename Rng>
double sample_mixup_lambda(Rng& rng, double a = kMixupBeta) {
  std::gamma_distribution<double> g(a, 1.0);
  const double x = g(rng);
  const double y = g(rng);
  if (x + y == 0.0) return 0.5;
  return x / (x + y);
}

}  // namespace fmnsed
