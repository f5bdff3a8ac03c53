#pragma once

#include "bilevel/core.hpp"

namespace bilevel::logreg {

// Binary logistic regression on 2-D features with an appended bias column.
// Weights are (w1, w2, bias). Labels are 0/1 stored as doubles.

inline constexpr double kRidge = 0.05;  // coefficient on |w|^2 in every lower level

/// [X, 1]
RealMat with_bias(const RealMat& X);

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

/// Mean cross-entropy over rows of Xb (bias already appended).
double mean_loss(const RealVec& w, const RealMat& Xb, const RealVec& y);
RealVec mean_loss_grad(const RealVec& w, const RealMat& Xb, const RealVec& y);

/// Weighted mean loss sum_i c_i l_i / sum_i c_i plus kRidge |w|^2, minimised to
/// gradient norm `tol`. Empty `weights` means uniform.
RealVec train(const RealMat& X, const RealVec& y, const RealVec& weights = {},
              double tol = 1e-10);

double accuracy(const RealVec& w, const RealMat& X, const RealVec& y);

}  // namespace bilevel::logreg
