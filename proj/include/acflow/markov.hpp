#pragma once

#include "acflow/core.hpp"
#include "acflow/policy.hpp"
#include "acflow/sampling.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <variant>
#include <vector>

namespace acflow {

/// q_ij(theta) = base(i,j) + slopes.row(i*N + j) . theta for i != j.
/// Diagonal entries of `base` and the matching slope rows are ignored.
struct AffineRates {
  Matrix base;
  Matrix slopes;

  int num_states() const { return static_cast<int>(base.rows()); }
  int dim() const { return static_cast<int>(slopes.cols()); }
  Eigen::Index slope_row(int i, int j) const {
    return static_cast<Eigen::Index>(i) * num_states() + j;
  }
};

/// q_ij(theta) = sum_a pi_theta(a|i) Q^(a)_ij, mixing one generator per action.
struct ActionMixture {
  std::vector<Matrix> generators;
  SoftmaxFeatures policy;

  int num_states() const {
    return generators.empty() ? 0 : static_cast<int>(generators.front().rows());
  }
  int dim() const { return policy.dim(); }
};

struct GeneratorFamily {
  std::variant<AffineRates, ActionMixture> form;

  int num_states() const {
    return std::visit([](const auto& f) { return f.num_states(); }, form);
  }
  int dim() const {
    return std::visit([](const auto& f) { return f.dim(); }, form);
  }
  bool is_affine() const { return std::holds_alternative<AffineRates>(form); }
};

inline constexpr double kGeneratorTol = 1e-12;

namespace detail {

inline Matrix raw_generator(const AffineRates& f, const Vector& theta) {
  const int n = f.num_states();
  Matrix q = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) q(i, j) = f.base(i, j) + f.slopes.row(f.slope_row(i, j)).dot(theta);
  return q;
}

inline Matrix raw_generator(const ActionMixture& f, const Vector& theta) {
  const int n = f.num_states();
  const PolicyMatrix pi = softmax_policy(f.policy, theta);
  Matrix q = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (std::size_t a = 0; a < f.generators.size(); ++a)
      q.row(i) += pi(i, static_cast<Eigen::Index>(a)) * f.generators[a].row(i);
  for (int i = 0; i < n; ++i) q(i, i) = 0.0;
  return q;
}

// Checks off-diagonals, clamps roundoff negatives and rebuilds the diagonal.
inline void finish_generator(Matrix& q) {
  const Eigen::Index n = q.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    double out = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      if (q(i, j) < -kGeneratorTol)
        fail(ErrorKind::ModelValidation,
             "negative off-diagonal rate q[" + std::to_string(i) + "][" +
                 std::to_string(j) + "] = " + std::to_string(q(i, j)));
      if (q(i, j) < 0.0) q(i, j) = 0.0;
      out += q(i, j);
    }
    q(i, i) = -out;
  }
}

}  // namespace detail

/// Q_theta. Throws ModelValidation if a rate is negative beyond 1e-12.
inline Matrix eval_generator(const GeneratorFamily& family, const Vector& theta) {
  require(theta.size() == family.dim(), "theta dimension does not match generator family");
  Matrix q = std::visit([&](const auto& f) { return detail::raw_generator(f, theta); },
                        family.form);
  detail::finish_generator(q);
  return q;
}

/// Structural and sign checks of the family on the box.
inline void validate_family(const GeneratorFamily& family, const ParameterBox& box) {
  if (family.dim() != box.dim)
    fail(ErrorKind::ModelValidation, "generator family dimension does not match theta box");
  if (const auto* f = std::get_if<AffineRates>(&family.form)) {
    const int n = f->num_states();
    if (n < 1 || f->base.cols() != n || f->slopes.rows() != static_cast<Eigen::Index>(n) * n)
      fail(ErrorKind::ModelValidation, "affine rates have inconsistent shapes");
    if (!f->base.allFinite() || !f->slopes.allFinite())
      fail(ErrorKind::ModelValidation, "affine rates contain non-finite values");
    // Affine in theta, so nonnegativity at the vertices covers the box.
    for (unsigned long v = 0; v < box.vertex_count(); ++v) eval_generator(family, box.vertex(v));
  } else {
    const auto& m = std::get<ActionMixture>(family.form);
    if (m.generators.empty() ||
        static_cast<int>(m.generators.size()) != m.policy.num_actions)
      fail(ErrorKind::ModelValidation, "action mixture needs one generator per action");
    const Eigen::Index n = m.generators.front().rows();
    if (n != m.policy.num_states)
      fail(ErrorKind::ModelValidation, "action mixture state count does not match policy");
    for (std::size_t a = 0; a < m.generators.size(); ++a) {
      const Matrix& g = m.generators[a];
      const std::string tag = "generator for action " + std::to_string(a);
      if (g.rows() != n || g.cols() != n)
        fail(ErrorKind::ModelValidation, tag + " has wrong shape");
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
          if (i != j && g(i, j) < 0.0)
            fail(ErrorKind::ModelValidation, tag + " has a negative off-diagonal entry");
        if (std::abs(g.row(i).sum()) > 1e-12 * std::max(1.0, g.row(i).lpNorm<1>()))
          fail(ErrorKind::ModelValidation, tag + " row " + std::to_string(i) + " does not sum to 0");
      }
    }
  }
}

/// Q^T mu.
inline Vector adjoint_apply(const Matrix& q, const Vector& mu) {
  return q.transpose() * mu;
}

/// Solves Q^T mu = 0, sum(mu) = 1 by replacing the last equation with the normalization row.
inline Vector stationary_law(const Matrix& q) {
  const Eigen::Index n = q.rows();
  if (n == 1) return Vector::Ones(1);
  const Matrix qt = q.transpose();
  const double scale = std::max(1.0, qt.cwiseAbs().colwise().sum().maxCoeff());

  Eigen::FullPivLU<Matrix> kernel_check(qt);
  kernel_check.setThreshold(1e-10);
  if (kernel_check.rank() < n - 1)
    fail(ErrorKind::NonUniqueStationaryLaw,
         "generator has a kernel of dimension " + std::to_string(n - kernel_check.rank()));

  Matrix system = qt;
  system.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs[n - 1] = 1.0;

  Eigen::FullPivLU<Matrix> lu(system);
  lu.setThreshold(1e-12);
  Vector mu = lu.isInvertible() ? Vector(lu.solve(rhs))
                                : Vector(system.colPivHouseholderQr().solve(rhs));

  if ((mu.array() < -1e-12).any())
    fail(ErrorKind::NonUniqueStationaryLaw, "stationary solve produced negative mass");
  mu = mu.cwiseMax(0.0);
  mu /= mu.sum();
  const double residual = l1_norm(qt * mu);
  if (!(residual <= 1e-10 * scale))
    fail(ErrorKind::NonUniqueStationaryLaw,
         "stationary residual " + std::to_string(residual) + " too large");
  return mu;
}

inline Vector stationary_law(const GeneratorFamily& family, const Vector& theta) {
  return stationary_law(eval_generator(family, theta));
}

/// e^{t Q^T}, the column-stochastic transition semigroup acting on laws.
inline Matrix semigroup(const Matrix& q, double t) {
  require(t >= 0.0, "semigroup time must be nonnegative");
  const Eigen::Index n = q.rows();
  if (t == 0.0) return Matrix::Identity(n, n);
  const double norm = q.cwiseAbs().rowwise().sum().maxCoeff() * t;
  // Beyond ||tQ|| = 1e3, split the time axis and square back up.
  int squarings = 0;
  while (norm / std::ldexp(1.0, squarings) > 1e3) ++squarings;
  const double scaled = std::ldexp(t, -squarings);
  Matrix p = (scaled * q.transpose()).exp();
  for (int k = 0; k < squarings; ++k) p = p * p;
  return p;
}

struct MixingEstimate {
  double c_mix = 1.0;
  double gamma = std::numeric_limits<double>::infinity();
  int theta_grid_size = 0;
  std::vector<double> t_grid;
  /// Set when Z = {0} (single state); the bound holds for any constants.
  bool vacuous = false;
};

/// -max Re(lambda) over the eigenvalues of Q other than the zero eigenvalue.
inline double spectral_gap(const Matrix& q) {
  if (q.rows() < 2) return std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<Matrix> solver(q, false);
  std::vector<double> re;
  for (Eigen::Index k = 0; k < q.rows(); ++k) re.push_back(solver.eigenvalues()[k].real());
  std::sort(re.begin(), re.end(), std::greater<>());
  return -re[1];
}

inline MixingEstimate estimate_mixing(const GeneratorFamily& family, const ParameterBox& box,
                                      int theta_samples = 101, double t_max = 10.0,
                                      int t_samples = 101) {
  require(theta_samples >= 1 && t_samples >= 2 && t_max > 0.0, "bad mixing grid");
  MixingEstimate est;
  const std::vector<Vector> grid = theta_grid(box, theta_samples);
  est.theta_grid_size = static_cast<int>(grid.size());
  for (int k = 0; k < t_samples; ++k) est.t_grid.push_back(t_max * k / (t_samples - 1));

  const int n = family.num_states();
  if (n == 1) {
    est.vacuous = true;
    return est;
  }

  std::vector<Matrix> generators;
  generators.reserve(grid.size());
  double gamma = std::numeric_limits<double>::infinity();
  for (const Vector& theta : grid) {
    generators.push_back(eval_generator(family, theta));
    const Matrix& q = generators.back();
    const double gap = spectral_gap(q);
    const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
    if (!(gap > 1e-10 * scale))
      fail(ErrorKind::MixingViolation, "zero spectral gap on the theta grid");
    gamma = std::min(gamma, gap);
  }
  est.gamma = gamma;

  // The unit l1 ball of Z is the hull of (e_i - e_j)/2, so pairs give the exact operator norm.
  double c_mix = 1.0;
  for (const Matrix& q : generators) {
    for (double t : est.t_grid) {
      const Matrix p = semigroup(q, t);
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          const double ratio = (p.col(i) - p.col(j)).lpNorm<1>() / 2.0;
          c_mix = std::max(c_mix, ratio * std::exp(gamma * t));
        }
    }
  }
  est.c_mix = c_mix;
  return est;
}

/// Lipschitz constant of theta -> Q_theta^T in the l1 -> l1 operator norm.
/// Exact for affine rates; an analytic upper bound for action mixtures.
inline double lipschitz_LQ(const GeneratorFamily& family) {
  if (const auto* f = std::get_if<AffineRates>(&family.form)) {
    const int n = f->num_states();
    const int d = f->dim();
    // In direction u, column i of dQ^T/dtheta has l1 mass
    //   sum_{j != i} |s_ij . u| + |sum_{j != i} s_ij . u|,
    // a max of linear forms v . u over sign patterns; the sup over |u| = 1 is max |v|.
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
      std::vector<Vector> rows;
      Vector total = Vector::Zero(d);
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        rows.push_back(f->slopes.row(f->slope_row(i, j)).transpose());
        total += rows.back();
      }
      if (rows.size() > 20) {
        double bound = total.norm();
        for (const Vector& r : rows) bound += r.norm();
        best = std::max(best, bound);
        continue;
      }
      const unsigned long patterns = 1UL << rows.size();
      for (unsigned long mask = 0; mask < patterns; ++mask) {
        Vector v = total;
        for (std::size_t k = 0; k < rows.size(); ++k)
          v += ((mask >> k) & 1UL) ? rows[k] : Vector(-rows[k]);
        best = std::max(best, v.norm());
      }
    }
    return best;
  }
  const auto& m = std::get<ActionMixture>(family.form);
  double psi_max = 0.0;
  for (Eigen::Index r = 0; r < m.policy.psi.rows(); ++r)
    psi_max = std::max(psi_max, m.policy.psi.row(r).norm());
  double q_max = 0.0;
  for (const Matrix& g : m.generators)
    q_max = std::max(q_max, g.cwiseAbs().rowwise().sum().maxCoeff());
  // The policy-weighted mean absolute deviation of psi . u is at most max |psi|.
  return psi_max / m.policy.tau * q_max;
}

/// Largest observed ||Q*_a - Q*_b||_{1->1} / |a - b| over grid neighbours and random pairs.
inline double empirical_lipschitz_LQ(const GeneratorFamily& family, const ParameterBox& box,
                                     int samples = 101) {
  const auto pairs = theta_pairs(box, samples);
  double best = 0.0;
  for (const auto& [a, b] : pairs) {
    const double gap = (a - b).norm();
    if (gap < 1e-14) continue;
    const Matrix diff = (eval_generator(family, a) - eval_generator(family, b)).transpose();
    best = std::max(best, diff.cwiseAbs().colwise().sum().maxCoeff() / gap);
  }
  return best;
}

/// L_mu = C_mix L_Q / gamma.
inline double invariant_law_lipschitz_bound(const MixingEstimate& mix, double lq) {
  if (mix.vacuous || lq == 0.0) return 0.0;
  return mix.c_mix * lq / mix.gamma;
}

struct MinorizationConstants {
  int k_star = 0;
  double q_under = 0.0;
  double q_bar = 0.0;
  double tau_star = 0.0;
  double alpha_star = 0.0;
  double c_path = 1.0;
  double gamma_path = 1.0;
  bool degenerate = false;
};

/// Minorization towards state `k_star` (0-based) and the pathwise contraction constants it yields.
inline MinorizationConstants minorization_constants(const GeneratorFamily& family,
                                                    const ParameterBox& box, int k_star,
                                                    int theta_samples = 101) {
  const int n = family.num_states();
  require(k_star >= 0 && k_star < n, "k_star out of range");
  MinorizationConstants mc;
  mc.k_star = k_star;
  if (n == 1) {
    mc.degenerate = true;
    return mc;
  }

  std::vector<Vector> grid;
  if (family.is_affine()) {
    for (unsigned long v = 0; v < box.vertex_count(); ++v) grid.push_back(box.vertex(v));
  } else {
    grid = theta_grid(box, theta_samples);
  }

  double q_under = std::numeric_limits<double>::infinity();
  double q_bar = 0.0;
  for (const Vector& theta : grid) {
    const Matrix q = eval_generator(family, theta);
    for (int i = 0; i < n; ++i) {
      if (i != k_star) q_under = std::min(q_under, q(i, k_star));
      q_bar = std::max(q_bar, -q(i, i));
    }
  }
  mc.q_under = q_under;
  mc.q_bar = q_bar;
  if (!(q_under > 0.0))
    fail(ErrorKind::MinorizationFailure,
         "rate into state " + std::to_string(k_star) + " reaches " + std::to_string(q_under));
  mc.tau_star = 1.0 / q_under;
  mc.alpha_star = std::exp(-q_bar / q_under);
  mc.c_path = 1.0 / (1.0 - mc.alpha_star);
  mc.gamma_path = q_under * std::log(1.0 / (1.0 - mc.alpha_star));
  return mc;
}

/// theta(r) = values[k] for breaks[k] <= r < breaks[k+1]; the last value extends to infinity.
struct PiecewiseConstantPath {
  std::vector<double> breaks;
  std::vector<Vector> values;

  const Vector& at(double r) const {
    auto it = std::upper_bound(breaks.begin(), breaks.end(), r);
    const auto k = it == breaks.begin() ? 0 : (it - breaks.begin()) - 1;
    return values[static_cast<std::size_t>(k)];
  }
};

/// Evolution operator of delta p' = Q*_{theta(r)} p from s to t, by exact exponentials per piece.
inline Matrix pathwise_propagator(const GeneratorFamily& family, const ParameterBox& box,
                                  const PiecewiseConstantPath& path, double delta, double s,
                                  double t) {
  require(delta > 0.0, "delta must be positive");
  require(0.0 <= s && s <= t, "propagator needs 0 <= s <= t");
  require(!path.values.empty() && path.values.size() == path.breaks.size(),
          "path needs one value per break");
  for (const Vector& v : path.values)
    require(box.contains(v), "path leaves the parameter box");

  const int n = family.num_states();
  Matrix u = Matrix::Identity(n, n);
  double r = s;
  while (r < t) {
    auto it = std::upper_bound(path.breaks.begin(), path.breaks.end(), r);
    const double next = it == path.breaks.end() ? t : std::min(t, *it);
    const Matrix q = eval_generator(family, path.at(r));
    u = semigroup(q, (next - r) / delta) * u;
    r = next;
  }
  return u;
}

/// Same operator for a general sampled path, by classical RK4 on the matrix equation.
inline Matrix pathwise_propagator(const GeneratorFamily& family, const ParameterBox& box,
                                  const std::function<Vector(double)>& path, double delta,
                                  double s, double t, int steps) {
  require(delta > 0.0, "delta must be positive");
  require(0.0 <= s && s <= t, "propagator needs 0 <= s <= t");
  require(steps >= 1, "need at least one step");
  const int n = family.num_states();
  auto rhs = [&](double r, const Matrix& p) {
    const Vector theta = path(r);
    require(box.contains(theta), "path leaves the parameter box");
    return Matrix(eval_generator(family, theta).transpose() * p / delta);
  };
  Matrix p = Matrix::Identity(n, n);
  const double h = (t - s) / steps;
  for (int k = 0; k < steps; ++k) {
    const double r = s + k * h;
    const Matrix k1 = rhs(r, p);
    const Matrix k2 = rhs(r + h / 2, p + h / 2 * k1);
    const Matrix k3 = rhs(r + h / 2, p + h / 2 * k2);
    const Matrix k4 = rhs(r + h, p + h * k3);
    p += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return p;
}

}  // namespace acflow
