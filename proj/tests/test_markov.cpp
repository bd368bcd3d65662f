#include "acflow/builtins.hpp"
#include "acflow/markov.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "two_state_oracle.hpp"

namespace acflow {
namespace {

Vector scalar(double x) { return Vector::Constant(1, x); }

const GeneratorFamily& two_state_family() {
  static const ModelSpec model = builtin_two_state();
  return model.generators;
}

constexpr ParameterBox kUnitBox{1, 1.0};

TEST(Generator, TwoStateRates) {
  const Matrix q0 = eval_generator(two_state_family(), scalar(0.0));
  EXPECT_DOUBLE_EQ(q0(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(q0(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(q0(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(q0(1, 1), -1.0);
  const Matrix q1 = eval_generator(two_state_family(), scalar(1.0));
  EXPECT_DOUBLE_EQ(q1(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(q1(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(q1(1, 0), 1.5);
  EXPECT_DOUBLE_EQ(q1(1, 1), -1.5);
}

TEST(Generator, RowsSumToZero) {
  const ModelSpec model = random_model(4, 5, 2, 3, 1, 0.2);
  for (const Vector& theta : theta_grid(model.box(), 4)) {
    const Matrix q = eval_generator(model.generators, theta);
    EXPECT_LT((q * Vector::Ones(5)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Generator, NegativeRateIsValidationError) {
  GeneratorFamily family = two_state_family();
  std::get<AffineRates>(family.form).base(0, 1) = 0.1;
  try {
    eval_generator(family, scalar(1.0));
    FAIL() << "expected a validation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ModelValidation);
  }
  EXPECT_THROW(validate_family(family, kUnitBox), Error);
}

TEST(Generator, ActionMixtureIsConvexCombination) {
  ModelSpec model = builtin_two_state();
  ActionMixture mix;
  Matrix g0(2, 2), g1(2, 2);
  g0 << -2, 2, 1, -1;
  g1 << -1, 1, 3, -3;
  mix.generators = {g0, g1};
  model.generators.form = mix;
  model = make_model(model);
  const Vector theta = scalar(0.4);
  const PolicyMatrix pi = softmax_policy(theta, model);
  const Matrix q = eval_generator(model.generators, theta);
  for (int i = 0; i < 2; ++i)
    EXPECT_NEAR(q(i, 1 - i), pi(i, 0) * g0(i, 1 - i) + pi(i, 1) * g1(i, 1 - i), 1e-15);
}

TEST(Adjoint, HandProduct) {
  const Matrix q = eval_generator(two_state_family(), scalar(0.0));
  Vector mu(2);
  mu << 0.75, 0.25;
  const Vector out = adjoint_apply(q, mu);
  EXPECT_DOUBLE_EQ(out[0], -0.5);
  EXPECT_DOUBLE_EQ(out[1], 0.5);
  Vector any(2);
  any << 3.0, -7.0;
  EXPECT_NEAR(adjoint_apply(q, any).sum(), 0.0, 1e-15);
}

TEST(StationaryLaw, TwoStateClosedForm) {
  const Vector mu0 = stationary_law(two_state_family(), scalar(0.0));
  EXPECT_NEAR(mu0[0], 0.5, 1e-15);
  const Vector mu1 = stationary_law(two_state_family(), scalar(1.0));
  EXPECT_NEAR(mu1[0], 0.75, 1e-15);
  EXPECT_NEAR(mu1[1], 0.25, 1e-15);
  EXPECT_LT(adjoint_apply(eval_generator(two_state_family(), scalar(1.0)), mu1).norm(), 1e-15);
}

TEST(StationaryLaw, SingleState) {
  const Matrix q = Matrix::Zero(1, 1);
  EXPECT_EQ(stationary_law(q), Vector::Ones(1));
}

TEST(StationaryLaw, DisconnectedChainIsNonUnique) {
  Matrix q = Matrix::Zero(3, 3);
  q << -1, 1, 0, 1, -1, 0, 0, 0, 0;
  try {
    stationary_law(q);
    FAIL() << "expected non-unique stationary law";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonUniqueStationaryLaw);
  }
}

TEST(StationaryLaw, ReducibleChainWithUniqueLaw) {
  // State 2 is transient; the unique law sits on {0, 1}.
  Matrix q(3, 3);
  q << -1, 1, 0, 2, -2, 0, 1, 1, -2;
  const Vector mu = stationary_law(q);
  EXPECT_NEAR(mu[0], 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(mu[1], 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(mu[2], 0.0, 1e-14);
}

TEST(Semigroup, IdentityAtZeroTime) {
  const Matrix q = eval_generator(two_state_family(), scalar(0.3));
  EXPECT_EQ(semigroup(q, 0.0), Matrix::Identity(2, 2));
  EXPECT_THROW(semigroup(q, -1.0), Error);
}

TEST(Semigroup, TwoByTwoClosedForm) {
  const Matrix p = semigroup(eval_generator(two_state_family(), scalar(0.0)), 1.0);
  EXPECT_NEAR(p(1, 0), (1.0 - std::exp(-2.0)) / 2.0, 1e-14);
  EXPECT_NEAR(p(0, 1), 0.432332, 1e-6);
  EXPECT_NEAR(p.col(0).sum(), 1.0, 1e-12);
  EXPECT_NEAR(p.col(1).sum(), 1.0, 1e-12);
}

TEST(Semigroup, LongTimeLimitAndLargeNorms) {
  const Matrix q = eval_generator(two_state_family(), scalar(1.0));
  for (double t : {5.0, 50.0, 900.0, 5000.0}) {
    const Matrix p = semigroup(q, t);
    EXPECT_LT((p.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10) << t;
    EXPECT_GE(p.minCoeff(), -1e-10);
    EXPECT_NEAR(p(0, 0), 0.75, std::exp(-2.0 * t) + 1e-10);
    EXPECT_NEAR(p(0, 1), 0.75, std::exp(-2.0 * t) + 1e-10);
  }
}

TEST(Semigroup, GroupLaw) {
  const ModelSpec model = random_model(13, 4, 2, 2, 1, 0.3);
  Vector theta(2);
  theta << 0.5, -0.1;
  const Matrix q = eval_generator(model.generators, theta);
  const Matrix lhs = semigroup(q, 0.7 + 1.9);
  const Matrix rhs = semigroup(q, 0.7) * semigroup(q, 1.9);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Mixing, TwoStateConstants) {
  const MixingEstimate mix = estimate_mixing(two_state_family(), kUnitBox, 101, 10.0, 101);
  EXPECT_NEAR(mix.gamma, 2.0, 1e-6);
  EXPECT_NEAR(mix.c_mix, 1.0, 1e-6);
  EXPECT_FALSE(mix.vacuous);
  EXPECT_EQ(mix.theta_grid_size, 101);
}

TEST(Mixing, SingleStateIsVacuous) {
  const ModelSpec model = random_model(1, 1, 2, 1, 1, 0.2);
  const MixingEstimate mix = estimate_mixing(model.generators, model.box());
  EXPECT_TRUE(mix.vacuous);
  EXPECT_TRUE(std::isinf(mix.gamma));
  EXPECT_EQ(invariant_law_lipschitz_bound(mix, lipschitz_LQ(model.generators)), 0.0);
}

TEST(Mixing, DisconnectedChainViolates) {
  // q_12 = theta/2 + 1/2 vanishes together with q_21 at theta = -1.
  AffineRates rates;
  rates.base = Matrix::Zero(2, 2);
  rates.base(0, 1) = 0.5;
  rates.base(1, 0) = 0.5;
  rates.slopes = Matrix::Zero(4, 1);
  rates.slopes(rates.slope_row(0, 1), 0) = 0.5;
  rates.slopes(rates.slope_row(1, 0), 0) = 0.5;
  const GeneratorFamily family{rates};
  validate_family(family, kUnitBox);
  try {
    estimate_mixing(family, kUnitBox, 11, 5.0, 11);
    FAIL() << "expected a mixing violation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MixingViolation);
  }
}

TEST(Lipschitz, TwoStateAndHomogeneity) {
  EXPECT_DOUBLE_EQ(lipschitz_LQ(two_state_family()), 1.0);
  GeneratorFamily doubled = two_state_family();
  std::get<AffineRates>(doubled.form).slopes *= 2.0;
  EXPECT_DOUBLE_EQ(lipschitz_LQ(doubled), 2.0);
  GeneratorFamily flat = two_state_family();
  std::get<AffineRates>(flat.form).slopes.setZero();
  EXPECT_DOUBLE_EQ(lipschitz_LQ(flat), 0.0);
}

TEST(Lipschitz, AffineValueBoundsEmpiricalSlope) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelSpec model = random_model(seed, 4, 2, 3, 1, 0.2);
    const double lq = lipschitz_LQ(model.generators);
    const double emp = empirical_lipschitz_LQ(model.generators, model.box(), 200);
    EXPECT_LE(emp, lq + 1e-9) << seed;
    EXPECT_GT(emp, 0.5 * lq) << seed;
  }
  EXPECT_NEAR(empirical_lipschitz_LQ(two_state_family(), kUnitBox, 101), 1.0, 1e-12);
}

TEST(Lipschitz, ActionMixtureBound) {
  ModelSpec model = random_model(8, 3, 3, 2, 1, 0.2);
  ActionMixture mix;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int a = 0; a < 3; ++a) {
    Matrix g = Matrix::Zero(3, 3);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j)
        if (i != j) g(i, j) = u(rng);
      g(i, i) = -g.row(i).sum();
    }
    mix.generators.push_back(g);
  }
  model.generators.form = mix;
  model = make_model(model);
  EXPECT_LE(empirical_lipschitz_LQ(model.generators, model.box(), 200),
            lipschitz_LQ(model.generators) + 1e-9);
}

TEST(InvariantLaw, BoundAndSlope) {
  const MixingEstimate mix = estimate_mixing(two_state_family(), kUnitBox);
  const double bound = invariant_law_lipschitz_bound(mix, lipschitz_LQ(two_state_family()));
  EXPECT_NEAR(bound, 0.5, 1e-6);
  double slope = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double a = -1.0 + 0.02 * k, b = a + 0.02;
    slope = std::max(slope, (stationary_law(two_state_family(), scalar(a)) -
                             stationary_law(two_state_family(), scalar(b)))
                                    .lpNorm<1>() /
                                (b - a));
  }
  EXPECT_NEAR(slope, 0.5, 1e-10);
  EXPECT_LE(slope, bound + 1e-6);
  EXPECT_EQ(invariant_law_lipschitz_bound(mix, 0.0), 0.0);
}

TEST(Minorization, TwoStateConstants) {
  const MinorizationConstants mc = minorization_constants(two_state_family(), kUnitBox, 0);
  EXPECT_DOUBLE_EQ(mc.q_under, 0.5);
  EXPECT_DOUBLE_EQ(mc.q_bar, 1.5);
  EXPECT_DOUBLE_EQ(mc.tau_star, 2.0);
  EXPECT_NEAR(mc.alpha_star, oracle::kAlphaStar, 1e-15);
  EXPECT_NEAR(mc.alpha_star, 0.0497871, 1e-7);
  EXPECT_NEAR(mc.c_path, 1.052395, 1e-6);
  EXPECT_NEAR(mc.gamma_path, oracle::kGammaPath, 1e-15);
  EXPECT_LE(mc.alpha_star, std::exp(-1.0));
  EXPECT_FALSE(mc.degenerate);
}

TEST(Minorization, SingleStateIsDegenerate) {
  const ModelSpec model = random_model(2, 1, 3, 1, 1, 0.5);
  const MinorizationConstants mc = minorization_constants(model.generators, model.box(), 0);
  EXPECT_TRUE(mc.degenerate);
  EXPECT_EQ(mc.c_path, 1.0);
  EXPECT_EQ(mc.gamma_path, 1.0);
}

TEST(Minorization, VanishingRateFails) {
  GeneratorFamily family = two_state_family();
  auto& rates = std::get<AffineRates>(family.form);
  rates.base(1, 0) = 0.5;  // q_21 = 1/2 + theta/2 hits 0 at theta = -1
  try {
    minorization_constants(family, kUnitBox, 0);
    FAIL() << "expected a minorization failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MinorizationFailure);
  }
}

TEST(Propagator, ConstantPathIsSemigroup) {
  PiecewiseConstantPath path{{0.0}, {scalar(0.4)}};
  const Matrix u = pathwise_propagator(two_state_family(), kUnitBox, path, 0.5, 0.3, 2.3);
  const Matrix p = semigroup(eval_generator(two_state_family(), scalar(0.4)), 2.0 / 0.5);
  EXPECT_LT((u - p).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Propagator, RK4MatchesExactComposition) {
  PiecewiseConstantPath path{{0.0, 0.5, 1.25}, {scalar(-0.8), scalar(0.9), scalar(0.1)}};
  const Matrix exact = pathwise_propagator(two_state_family(), kUnitBox, path, 0.3, 0.0, 2.0);
  // Smooth path version: compare on a path that is constant over the interval.
  const Matrix rk = pathwise_propagator(
      two_state_family(), kUnitBox, [](double) { return scalar(0.1); }, 0.3, 1.25, 2.0, 400);
  const Matrix ref = pathwise_propagator(two_state_family(), kUnitBox, path, 0.3, 1.25, 2.0);
  EXPECT_LT((rk - ref).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((exact.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
}

TEST(Propagator, LeavingBoxIsRejected) {
  PiecewiseConstantPath path{{0.0, 1.0}, {scalar(0.0), scalar(1.5)}};
  EXPECT_THROW(pathwise_propagator(two_state_family(), kUnitBox, path, 1.0, 0.0, 2.0), Error);
}

TEST(Propagator, BlockMinorizationAndContraction) {
  const MinorizationConstants mc = minorization_constants(two_state_family(), kUnitBox, 0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 1.0);
  for (int sample = 0; sample < 200; ++sample) {
    PiecewiseConstantPath path;
    double r = 0.0;
    for (int k = 0; k < 6; ++k) {
      path.breaks.push_back(r);
      path.values.push_back(scalar(u(rng)));
      r += 2.0 * pos(rng);
    }
    const double delta = 0.05 + pos(rng);
    const double s = 3.0 * pos(rng);
    const Matrix block =
        pathwise_propagator(two_state_family(), kUnitBox, path, delta, s, s + delta * mc.tau_star);
    EXPECT_GE(block.row(0).minCoeff(), mc.alpha_star - 1e-12);
    EXPECT_LT((block.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);

    const double t = s + 5.0 * pos(rng);
    const Matrix prop = pathwise_propagator(two_state_family(), kUnitBox, path, delta, s, t);
    Vector xi(2);
    xi << 1.0, -1.0;
    const double lhs = (prop * xi).lpNorm<1>();
    EXPECT_LE(lhs, xi.lpNorm<1>() + 1e-12);  // nonexpansive on Z
    EXPECT_LE(lhs, mc.c_path * std::exp(-mc.gamma_path * (t - s) / delta) * 2.0 + 1e-12);
  }
}

}  // namespace
}  // namespace acflow
