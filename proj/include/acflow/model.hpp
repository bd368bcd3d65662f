#pragma once

#include "acflow/core.hpp"
#include "acflow/markov.hpp"
#include "acflow/policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace acflow {

inline constexpr double kBoxTol = 1e-9;
inline constexpr double kSimplexTol = 1e-9;

/// A finite-state actor-critic problem instance.
///
/// Features are stored row-wise: row i*K + a of `actor.psi` is psi_{i,a} and the
/// same row of `critic_features` is phi_{i,a}. Build through make_model(), which
/// binds an action-mixture generator family to the actor policy and validates
/// every shape and sign condition.
struct ModelSpec {
  int N = 1;
  int K = 1;
  int d = 1;
  int m = 1;
  double R_theta = 1.0;
  double lambda_c = 1.0;
  Matrix rewards;
  SoftmaxFeatures actor;
  Matrix critic_features;
  GeneratorFamily generators;

  double tau() const { return actor.tau; }
  ParameterBox box() const { return ParameterBox{d, R_theta}; }
  Eigen::Index row(int i, int a) const { return actor.row(i, a); }
};

inline void validate_model(const ModelSpec& model) {
  auto bad = [](const std::string& what) { fail(ErrorKind::ModelValidation, what); };
  if (model.N < 1 || model.K < 1 || model.d < 1 || model.m < 1)
    bad("dimensions N, K, d, m must be at least 1");
  if (!(model.R_theta > 0.0)) bad("R_theta must be positive");
  if (!(model.actor.tau > 0.0)) bad("tau must be positive");
  if (!(model.lambda_c > 0.0)) bad("lambda_c must be positive");
  const Eigen::Index pairs = static_cast<Eigen::Index>(model.N) * model.K;
  if (model.rewards.rows() != model.N || model.rewards.cols() != model.K)
    bad("rewards must be N x K");
  if (model.actor.num_states != model.N || model.actor.num_actions != model.K ||
      model.actor.psi.rows() != pairs || model.actor.psi.cols() != model.d)
    bad("actor features must be N x K x d");
  if (model.critic_features.rows() != pairs || model.critic_features.cols() != model.m)
    bad("critic features must be N x K x m");
  if (!model.rewards.allFinite() || !model.actor.psi.allFinite() ||
      !model.critic_features.allFinite())
    bad("rewards and features must be finite");
  if (model.generators.num_states() != model.N) bad("generator family must act on N states");
  validate_family(model.generators, model.box());
}

/// Binds an action-mixture family to the model's actor policy, then validates.
inline ModelSpec make_model(ModelSpec model) {
  if (auto* mix = std::get_if<ActionMixture>(&model.generators.form)) mix->policy = model.actor;
  validate_model(model);
  return model;
}

/// A point (theta, w, mu) of the enlarged state space. Reduced points leave mu empty.
struct PhasePoint {
  Vector theta;
  Vector w;
  Vector mu;
};

struct Tangent {
  Vector dtheta;
  Vector dw;
  Vector dmu;
};

struct ReducedTangent {
  Vector dtheta;
  Vector dw;
};

inline bool in_simplex(const Vector& mu, double tol = kSimplexTol) {
  return mu.size() > 0 && (mu.array() >= -tol).all() && std::abs(mu.sum() - 1.0) <= tol;
}

inline void check_theta(const ModelSpec& model, const Vector& theta, double tol = kBoxTol) {
  require(theta.size() == model.d, "theta has dimension " + std::to_string(theta.size()) +
                                       ", expected " + std::to_string(model.d));
  require(model.box().contains(theta, tol), "theta lies outside the parameter box");
}

inline void check_mu(const ModelSpec& model, const Vector& mu, double tol = kSimplexTol) {
  require(mu.size() == model.N, "mu has dimension " + std::to_string(mu.size()) +
                                    ", expected " + std::to_string(model.N));
  require(in_simplex(mu, tol), "mu is not a probability vector");
}

inline void check_point(const ModelSpec& model, const PhasePoint& x, double tol = kBoxTol) {
  check_theta(model, x.theta, tol);
  require(x.w.size() == model.m, "w has dimension " + std::to_string(x.w.size()) +
                                     ", expected " + std::to_string(model.m));
  check_mu(model, x.mu, tol);
}

/// max_{i,a} |r_{i,a}| * max_{i,a} |phi_{i,a}|.
inline double reward_feature_bound(const ModelSpec& model) {
  const double m_r = model.rewards.cwiseAbs().maxCoeff();
  const double m_phi = model.critic_features.rowwise().norm().maxCoeff();
  return m_r * m_phi;
}

/// Radius of the absorbing critic ball, max(1, 2 B_b / lambda_c).
inline double critic_radius(const ModelSpec& model) {
  return std::max(1.0, 2.0 * reward_feature_bound(model) / model.lambda_c);
}

/// Membership in K = Theta x closed ball(R_w) x simplex.
inline bool in_absorbing_set(const ModelSpec& model, const PhasePoint& x, double tol) {
  return model.box().contains(x.theta, tol) && x.w.norm() <= critic_radius(model) + tol &&
         in_simplex(x.mu, tol);
}

/// d_X = |dtheta| + |dw| + |dmu|_1.
inline double phase_distance(const PhasePoint& x, const PhasePoint& y) {
  double dist = (x.theta - y.theta).norm() + (x.w - y.w).norm();
  if (x.mu.size() > 0 || y.mu.size() > 0) dist += (x.mu - y.mu).lpNorm<1>();
  return dist;
}

inline PolicyMatrix softmax_policy(const Vector& theta, const ModelSpec& model) {
  check_theta(model, theta);
  return softmax_policy(model.actor, theta);
}

inline Vector grad_log_policy(const Vector& theta, const ModelSpec& model, int i, int a) {
  check_theta(model, theta);
  return grad_log_policy(model.actor, theta, i, a);
}

namespace detail {

inline Matrix occupancy_of(const PolicyMatrix& pi, const Vector& mu) {
  return mu.asDiagonal() * pi;
}

inline Vector critic_b_of(const ModelSpec& model, const Matrix& nu) {
  Vector b = Vector::Zero(model.m);
  for (int i = 0; i < model.N; ++i)
    for (int a = 0; a < model.K; ++a)
      b += nu(i, a) * model.rewards(i, a) * model.critic_features.row(model.row(i, a)).transpose();
  return b;
}

inline Matrix critic_A_of(const ModelSpec& model, const Matrix& nu) {
  Matrix a_mat = model.lambda_c * Matrix::Identity(model.m, model.m);
  for (int i = 0; i < model.N; ++i)
    for (int a = 0; a < model.K; ++a) {
      const auto phi = model.critic_features.row(model.row(i, a));
      a_mat.noalias() += nu(i, a) * phi.transpose() * phi;
    }
  return a_mat;
}

inline Vector actor_gtilde_of(const ModelSpec& model, const Vector& theta, const Vector& w,
                              const Vector& mu) {
  const PolicyMatrix pi = softmax_policy(model.actor, theta);
  const Matrix log_pi = log_softmax_policy(model.actor, theta);
  const double tau = model.tau();
  Vector g = Vector::Zero(model.d);
  for (int i = 0; i < model.N; ++i) {
    if (mu[i] == 0.0) continue;
    const Vector mean = mean_feature(model.actor, pi, i);
    for (int a = 0; a < model.K; ++a) {
      const Eigen::Index r = model.row(i, a);
      const double weight = mu[i] * pi(i, a) *
                            (model.rewards(i, a) + model.critic_features.row(r).dot(w) -
                             tau * log_pi(i, a));
      g += weight / tau * (model.actor.psi.row(r).transpose() - mean);
    }
  }
  return g;
}

inline Vector damping_of(const ModelSpec& model, const Vector& theta) {
  return (model.R_theta * model.R_theta - theta.array().square()).matrix();
}

// Field on the ambient space. The generator is evaluated at the clipped theta.
inline Tangent exact_field(const ModelSpec& model, const Vector& theta, const Vector& w,
                           const Vector& mu, double delta) {
  const PolicyMatrix pi = softmax_policy(model.actor, theta);
  const Matrix nu = occupancy_of(pi, mu);
  Tangent out;
  out.dtheta = damping_of(model, theta).cwiseProduct(actor_gtilde_of(model, theta, w, mu));
  out.dw = critic_b_of(model, nu) - critic_A_of(model, nu) * w;
  const Matrix q = eval_generator(model.generators, model.box().clip(theta));
  out.dmu = q.transpose() * mu / delta;
  return out;
}

inline ReducedTangent reduced_field(const ModelSpec& model, const Vector& theta, const Vector& w) {
  const Vector clipped = model.box().clip(theta);
  const Vector mu = stationary_law(model.generators, clipped);
  const PolicyMatrix pi = softmax_policy(model.actor, theta);
  const Matrix nu = occupancy_of(pi, mu);
  ReducedTangent out;
  out.dtheta = damping_of(model, theta).cwiseProduct(actor_gtilde_of(model, theta, w, mu));
  out.dw = critic_b_of(model, nu) - critic_A_of(model, nu) * w;
  return out;
}

}  // namespace detail

/// nu(i, a) = mu_i pi_theta(a|i).
inline Matrix occupancy(const Vector& theta, const Vector& mu, const ModelSpec& model) {
  check_theta(model, theta);
  check_mu(model, mu);
  return detail::occupancy_of(softmax_policy(model.actor, theta), mu);
}

inline Vector critic_b(const Vector& theta, const Vector& mu, const ModelSpec& model) {
  return detail::critic_b_of(model, occupancy(theta, mu, model));
}

inline Matrix critic_A(const Vector& theta, const Vector& mu, const ModelSpec& model) {
  return detail::critic_A_of(model, occupancy(theta, mu, model));
}

/// Undamped policy-gradient direction with entropy regularization.
inline Vector actor_gtilde(const Vector& theta, const Vector& w, const Vector& mu,
                           const ModelSpec& model) {
  check_theta(model, theta);
  check_mu(model, mu);
  require(w.size() == model.m, "w has wrong dimension");
  return detail::actor_gtilde_of(model, theta, w, mu);
}

/// diag(R^2 - theta_j^2), returned as its diagonal.
inline Vector damping_D(const Vector& theta, const ModelSpec& model) {
  check_theta(model, theta);
  return detail::damping_of(model, theta);
}

/// G = D(theta) G~(theta, w, mu).
inline Vector actor_G(const Vector& theta, const Vector& w, const Vector& mu,
                      const ModelSpec& model) {
  return damping_D(theta, model).cwiseProduct(actor_gtilde(theta, w, mu, model));
}

inline Tangent exact_vector_field(const PhasePoint& x, double delta, const ModelSpec& model) {
  require(delta > 0.0, "delta must be positive");
  check_point(model, x);
  return detail::exact_field(model, x.theta, x.w, x.mu, delta);
}

inline ReducedTangent reduced_vector_field(const Vector& theta, const Vector& w,
                                           const ModelSpec& model) {
  check_theta(model, theta);
  require(w.size() == model.m, "w has wrong dimension");
  return detail::reduced_field(model, theta, w);
}

}  // namespace acflow
