#pragma once

#include "acflow/model.hpp"

#include <cstdint>
#include <random>

namespace acflow {

/// Two states, two actions, scalar actor and critic, with policy-dependent switching
/// rates q_12 = 1 - theta/2 and q_21 = 1 + theta/2.
inline ModelSpec builtin_two_state() {
  ModelSpec model;
  model.N = 2;
  model.K = 2;
  model.d = 1;
  model.m = 1;
  model.R_theta = 1.0;
  model.lambda_c = 1.0;

  model.rewards = Matrix::Zero(2, 2);
  model.rewards(0, 0) = 1.0;
  model.rewards(1, 1) = 0.5;

  model.actor.num_states = 2;
  model.actor.num_actions = 2;
  model.actor.tau = 1.0;
  model.actor.psi.resize(4, 1);
  model.actor.psi << 1.0, -1.0, -1.0, 1.0;

  model.critic_features.resize(4, 1);
  model.critic_features << 1.0, 0.0, 0.0, 1.0;

  AffineRates rates;
  rates.base = Matrix::Zero(2, 2);
  rates.base(0, 1) = 1.0;
  rates.base(1, 0) = 1.0;
  rates.slopes = Matrix::Zero(4, 1);
  rates.slopes(rates.slope_row(0, 1), 0) = -0.5;
  rates.slopes(rates.slope_row(1, 0), 0) = 0.5;
  model.generators.form = rates;
  return make_model(model);
}

/// Seeded random instance with features and rewards uniform in [-1, 1] and affine rates
/// satisfying q_{i,0}(theta) >= rate_floor on the whole box (reference state 0).
inline ModelSpec random_model(std::uint64_t seed, int N, int K, int d, int m,
                              double rate_floor) {
  require(rate_floor > 0.0, "rate_floor must be positive");
  require(N >= 1 && K >= 1 && d >= 1 && m >= 1, "dimensions must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ModelSpec model;
  model.N = N;
  model.K = K;
  model.d = d;
  model.m = m;
  model.R_theta = 1.0;
  model.lambda_c = 1.0;
  const Eigen::Index pairs = static_cast<Eigen::Index>(N) * K;

  model.rewards.resize(N, K);
  for (Eigen::Index k = 0; k < model.rewards.size(); ++k) model.rewards.data()[k] = sym(rng);
  model.actor.num_states = N;
  model.actor.num_actions = K;
  model.actor.tau = 1.0;
  model.actor.psi.resize(pairs, d);
  for (Eigen::Index k = 0; k < model.actor.psi.size(); ++k) model.actor.psi.data()[k] = sym(rng);
  model.critic_features.resize(pairs, m);
  for (Eigen::Index k = 0; k < model.critic_features.size(); ++k)
    model.critic_features.data()[k] = sym(rng);

  AffineRates rates;
  rates.base = Matrix::Zero(N, N);
  rates.slopes = Matrix::Zero(static_cast<Eigen::Index>(N) * N, d);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      double reach = 0.0;  // max of |s . theta| over the box
      for (int c = 0; c < d; ++c) {
        const double s = 0.5 * sym(rng);
        rates.slopes(rates.slope_row(i, j), c) = s;
        reach += std::abs(s) * model.R_theta;
      }
      const double floor = (j == 0) ? rate_floor : 0.0;
      rates.base(i, j) = floor + reach + unit(rng);
    }
  }
  model.generators.form = rates;
  return make_model(model);
}

}  // namespace acflow
