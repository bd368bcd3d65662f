#include "acflow/builtins.hpp"
#include "acflow/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "two_state_oracle.hpp"

namespace acflow {
namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

TEST(SoftmaxPolicy, UniformAtZero) {
  const ModelSpec model = builtin_two_state();
  const PolicyMatrix pi = softmax_policy(vec({0.0}), model);
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < 2; ++a) EXPECT_DOUBLE_EQ(pi(i, a), 0.5);
}

TEST(SoftmaxPolicy, LogisticAtOne) {
  const ModelSpec model = builtin_two_state();
  const PolicyMatrix pi = softmax_policy(vec({1.0}), model);
  const double p = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(pi(0, 0), p, 1e-15);
  EXPECT_NEAR(pi(1, 1), p, 1e-15);
  EXPECT_NEAR(pi(1, 1), 0.880797, 1e-6);
}

TEST(SoftmaxPolicy, RejectsWrongDimension) {
  const ModelSpec model = builtin_two_state();
  EXPECT_THROW(softmax_policy(vec({0.0, 0.1}), model), Error);
}

TEST(SoftmaxPolicy, ShiftInvariantAndOverflowSafe) {
  ModelSpec model = random_model(7, 3, 4, 2, 2, 0.2);
  const Vector theta = vec({0.3, -0.7});
  const PolicyMatrix base = softmax_policy(theta, model);
  ModelSpec shifted = model;
  for (int i = 0; i < model.N; ++i)
    for (int a = 0; a < model.K; ++a) shifted.actor.psi.row(model.row(i, a)) += vec({2.0, -3.0});
  EXPECT_LT((softmax_policy(theta, shifted) - base).cwiseAbs().maxCoeff(), 1e-12);

  model.actor.tau = 1e-4;  // logits of order 1e4
  const PolicyMatrix sharp = softmax_policy(theta, model);
  EXPECT_TRUE(sharp.allFinite());
  for (int i = 0; i < model.N; ++i) EXPECT_NEAR(sharp.row(i).sum(), 1.0, 1e-12);
}

TEST(GradLogPolicy, ClosedFormAtZero) {
  const ModelSpec model = builtin_two_state();
  EXPECT_DOUBLE_EQ(grad_log_policy(vec({0.0}), model, 0, 0)[0], 1.0);
  EXPECT_DOUBLE_EQ(grad_log_policy(vec({0.0}), model, 0, 1)[0], -1.0);
}

TEST(GradLogPolicy, ZeroPolicyMean) {
  const ModelSpec model = random_model(11, 4, 3, 3, 2, 0.1);
  const Vector theta = vec({0.2, -0.4, 0.9});
  const PolicyMatrix pi = softmax_policy(theta, model);
  for (int i = 0; i < model.N; ++i) {
    Vector mean = Vector::Zero(model.d);
    for (int a = 0; a < model.K; ++a) mean += pi(i, a) * grad_log_policy(theta, model, i, a);
    EXPECT_LT(mean.norm(), 1e-14);
  }
}

TEST(GradLogPolicy, MatchesFiniteDifference) {
  const ModelSpec model = builtin_two_state();
  const double h = 1e-5;
  const double fd = (std::log(softmax_policy(vec({0.3 + h}), model)(0, 0)) -
                     std::log(softmax_policy(vec({0.3 - h}), model)(0, 0))) /
                    (2 * h);
  EXPECT_NEAR(grad_log_policy(vec({0.3}), model, 0, 0)[0], fd, 1e-6);
}

TEST(GradLogPolicy, IndexOutOfRange) {
  const ModelSpec model = builtin_two_state();
  EXPECT_THROW(grad_log_policy(vec({0.0}), model, 2, 0), Error);
  EXPECT_THROW(grad_log_policy(vec({0.0}), model, 0, -1), Error);
}

TEST(Occupancy, UniformAndProduct) {
  const ModelSpec model = builtin_two_state();
  const Matrix nu0 = occupancy(vec({0.0}), vec({0.5, 0.5}), model);
  EXPECT_LT((nu0.array() - 0.25).abs().maxCoeff(), 1e-15);
  const Matrix nu1 = occupancy(vec({1.0}), vec({0.75, 0.25}), model);
  EXPECT_NEAR(nu1(0, 0), 0.75 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(nu1(0, 0), 0.660598, 1e-6);
  EXPECT_NEAR(nu1.sum(), 1.0, 1e-12);
}

TEST(Occupancy, RejectsNonSimplex) {
  const ModelSpec model = builtin_two_state();
  EXPECT_THROW(occupancy(vec({0.0}), vec({0.6, 0.6}), model), Error);
  EXPECT_THROW(occupancy(vec({0.0}), vec({1.1, -0.1}), model), Error);
}

TEST(Critic, TwoStateValues) {
  const ModelSpec model = builtin_two_state();
  EXPECT_NEAR(critic_b(vec({0.0}), vec({0.5, 0.5}), model)[0], 0.375, 1e-15);
  EXPECT_NEAR(critic_A(vec({0.0}), vec({0.5, 0.5}), model)(0, 0), 1.5, 1e-15);
}

TEST(Critic, ZeroRewardsAndFeatures) {
  ModelSpec model = random_model(3, 3, 2, 1, 3, 0.2);
  model.rewards.setZero();
  const Vector mu = vec({0.2, 0.3, 0.5});
  EXPECT_EQ(critic_b(vec({0.1}), mu, model), Vector::Zero(3));
  model.critic_features.setZero();
  EXPECT_EQ(critic_A(vec({0.1}), mu, model), Matrix::Identity(3, 3) * model.lambda_c);
}

TEST(Critic, BoundAndCoercivity) {
  const ModelSpec model = random_model(5, 4, 3, 2, 3, 0.2);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 1.0);
  const double bb = reward_feature_bound(model);
  for (int s = 0; s < 100; ++s) {
    const Vector theta = vec({u(rng), u(rng)});
    Vector mu(4);
    for (int i = 0; i < 4; ++i) mu[i] = pos(rng);
    mu /= mu.sum();
    EXPECT_LE(critic_b(theta, mu, model).norm(), bb + 1e-12);
    const Matrix a = critic_A(theta, mu, model);
    EXPECT_LT((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    const Vector v = vec({u(rng), u(rng), u(rng)});
    EXPECT_GE(v.dot(a * v), model.lambda_c * v.squaredNorm() - 1e-12);
  }
}

TEST(ActorField, TwoStateScalarFormula) {
  const ModelSpec model = builtin_two_state();
  EXPECT_NEAR(actor_gtilde(vec({0.0}), vec({0.0}), vec({0.5, 0.5}), model)[0], 0.375, 1e-15);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 1.0);
  for (int s = 0; s < 50; ++s) {
    const double th = u(rng), w = 2 * u(rng), m1 = pos(rng);
    EXPECT_NEAR(actor_gtilde(vec({th}), vec({w}), vec({m1, 1 - m1}), model)[0],
                oracle::gtilde(th, w, m1), 1e-12);
  }
}

TEST(ActorField, EntropyTermVanishesBySymmetry) {
  ModelSpec model = builtin_two_state();
  model.rewards.setZero();
  EXPECT_NEAR(actor_gtilde(vec({0.0}), vec({0.0}), vec({0.3, 0.7}), model)[0], 0.0, 1e-15);
}

TEST(Damping, Values) {
  const ModelSpec model = builtin_two_state();
  EXPECT_DOUBLE_EQ(damping_D(vec({0.0}), model)[0], 1.0);
  EXPECT_DOUBLE_EQ(damping_D(vec({1.0}), model)[0], 0.0);
  EXPECT_DOUBLE_EQ(damping_D(vec({0.5}), model)[0], 0.75);
}

TEST(ExactField, TwoStateAtOrigin) {
  const ModelSpec model = builtin_two_state();
  const Tangent v = exact_vector_field({vec({0.0}), vec({0.0}), vec({0.5, 0.5})}, 2.0, model);
  EXPECT_NEAR(v.dtheta[0], 0.375, 1e-15);
  EXPECT_NEAR(v.dw[0], 0.375, 1e-15);
  EXPECT_NEAR(v.dmu[0], 0.0, 1e-15);
  EXPECT_NEAR(v.dmu[1], 0.0, 1e-15);
}

TEST(ExactField, RejectsNonPositiveDelta) {
  const ModelSpec model = builtin_two_state();
  const PhasePoint x{vec({0.0}), vec({0.0}), vec({0.5, 0.5})};
  EXPECT_THROW(exact_vector_field(x, 0.0, model), Error);
  EXPECT_THROW(exact_vector_field(x, -1.0, model), Error);
}

TEST(ExactField, StationaryLawIsFixedAndMassConserved) {
  const ModelSpec model = random_model(21, 5, 3, 2, 2, 0.3);
  const Vector theta = vec({0.4, -0.2});
  const Vector mu_star = stationary_law(model.generators, theta);
  const Tangent v = exact_vector_field({theta, vec({0.1, 0.2}), mu_star}, 0.5, model);
  EXPECT_LT(v.dmu.lpNorm<1>(), 1e-12);
  const Tangent u = exact_vector_field({theta, vec({0.1, 0.2}), vec({1, 0, 0, 0, 0})}, 0.1, model);
  EXPECT_NEAR(u.dmu.sum(), 0.0, 1e-12);
}

TEST(ExactField, MatchesScalarSystemOnK) {
  const ModelSpec model = builtin_two_state();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 1.0);
  for (int s = 0; s < 100; ++s) {
    const double th = u(rng), w = 2 * u(rng), m1 = pos(rng);
    const Tangent v = exact_vector_field({vec({th}), vec({w}), vec({m1, 1 - m1})}, 2.0, model);
    const auto expect = oracle::exact_field(th, w, m1);
    EXPECT_NEAR(v.dtheta[0], expect[0], 1e-12);
    EXPECT_NEAR(v.dw[0], expect[1], 1e-12);
    EXPECT_NEAR(v.dmu[0], expect[2], 1e-12);
    EXPECT_NEAR(v.dmu.sum(), 0.0, 1e-12);
  }
}

TEST(ReducedField, OriginAndEquilibrium) {
  const ModelSpec model = builtin_two_state();
  const ReducedTangent v0 = reduced_vector_field(vec({0.0}), vec({0.0}), model);
  EXPECT_NEAR(v0.dtheta[0], 0.375, 1e-15);
  EXPECT_NEAR(v0.dw[0], 0.375, 1e-15);
  const ReducedTangent ve =
      reduced_vector_field(vec({oracle::kThetaStar}), vec({oracle::kWStar}), model);
  EXPECT_NEAR(ve.dtheta[0], 0.0, 1e-7);
  EXPECT_NEAR(ve.dw[0], 0.0, 1e-7);
  EXPECT_NEAR(oracle::kThetaStar, 0.59, 0.005);
  EXPECT_NEAR(oracle::kWStar, 0.36, 0.005);
}

TEST(ReducedField, BoundaryIsClamped) {
  const ModelSpec model = builtin_two_state();
  for (double th : {-1.0, 1.0}) {
    const Vector mu = stationary_law(model.generators, vec({th}));
    ASSERT_NE(actor_gtilde(vec({th}), vec({0.3}), mu, model)[0], 0.0);
    EXPECT_EQ(reduced_vector_field(vec({th}), vec({0.3}), model).dtheta[0], 0.0);
  }
}

TEST(ModelValidation, RejectsBadInstances) {
  ModelSpec model = builtin_two_state();
  model.lambda_c = 0.0;
  EXPECT_THROW(make_model(model), Error);
  model = builtin_two_state();
  model.rewards.resize(3, 2);
  model.rewards.setZero();
  EXPECT_THROW(make_model(model), Error);
  model = builtin_two_state();
  std::get<AffineRates>(model.generators.form).base(0, 1) = 0.2;  // q_12 < 0 at theta = 1
  EXPECT_THROW(make_model(model), Error);
}

}  // namespace
}  // namespace acflow
