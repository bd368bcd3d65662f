#pragma once

#include "acflow/core.hpp"

#include <cmath>

namespace acflow {

/// Softmax actor features: row i*K + a of `psi` holds the d-vector psi_{i,a}.
struct SoftmaxFeatures {
  int num_states = 1;
  int num_actions = 1;
  double tau = 1.0;
  Matrix psi;

  int dim() const { return static_cast<int>(psi.cols()); }
  Eigen::Index row(int i, int a) const {
    return static_cast<Eigen::Index>(i) * num_actions + a;
  }
};

/// Policy probabilities pi(a|i), one row per state.
using PolicyMatrix = Matrix;

/// Logits psi_{i,a} . theta / tau as an N x K matrix.
inline Matrix policy_logits(const SoftmaxFeatures& f, const Vector& theta) {
  require(theta.size() == f.dim(), "theta has dimension " +
                                       std::to_string(theta.size()) +
                                       ", expected " + std::to_string(f.dim()));
  const Vector flat = f.psi * theta / f.tau;
  Matrix logits(f.num_states, f.num_actions);
  for (int i = 0; i < f.num_states; ++i)
    for (int a = 0; a < f.num_actions; ++a) logits(i, a) = flat[f.row(i, a)];
  return logits;
}

/// log pi(a|i) with per-state max subtraction.
inline Matrix log_softmax_policy(const SoftmaxFeatures& f, const Vector& theta) {
  Matrix logits = policy_logits(f, theta);
  for (int i = 0; i < f.num_states; ++i) {
    const double top = logits.row(i).maxCoeff();
    const double lse =
        top + std::log((logits.row(i).array() - top).exp().sum());
    logits.row(i).array() -= lse;
  }
  return logits;
}

inline PolicyMatrix softmax_policy(const SoftmaxFeatures& f, const Vector& theta) {
  Matrix pi = policy_logits(f, theta);
  for (int i = 0; i < f.num_states; ++i) {
    const double top = pi.row(i).maxCoeff();
    pi.row(i) = (pi.row(i).array() - top).exp().matrix();
    pi.row(i) /= pi.row(i).sum();
  }
  return pi;
}

/// Policy-weighted mean feature sum_b pi(b|i) psi_{i,b}.
inline Vector mean_feature(const SoftmaxFeatures& f, const PolicyMatrix& pi, int i) {
  Vector mean = Vector::Zero(f.dim());
  for (int b = 0; b < f.num_actions; ++b) mean += pi(i, b) * f.psi.row(f.row(i, b)).transpose();
  return mean;
}

/// Score function (psi_{i,a} - E_pi psi_{i,.}) / tau.
inline Vector grad_log_policy(const SoftmaxFeatures& f, const Vector& theta, int i, int a) {
  require(i >= 0 && i < f.num_states, "state index " + std::to_string(i) + " out of range");
  require(a >= 0 && a < f.num_actions, "action index " + std::to_string(a) + " out of range");
  const PolicyMatrix pi = softmax_policy(f, theta);
  return (f.psi.row(f.row(i, a)).transpose() - mean_feature(f, pi, i)) / f.tau;
}

}  // namespace acflow
