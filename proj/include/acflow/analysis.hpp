#pragma once

#include "acflow/core.hpp"
#include "acflow/integrate.hpp"
#include "acflow/markov.hpp"
#include "acflow/model.hpp"
#include "acflow/parallel.hpp"
#include "acflow/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace acflow {

// ---------------------------------------------------------------------------
// Tracking of the exact flow by the lifted reduced flow
// ---------------------------------------------------------------------------

struct TrackingReport {
  std::vector<double> deltas;
  std::vector<double> times;
  /// Indexed [delta][time]: |mu^delta(t) - mu_{theta^delta(t)}|_1.
  std::vector<std::vector<double>> state_defect;
  /// Indexed [delta][time]: |theta^delta - theta_bar| + |w^delta - w_bar|.
  std::vector<std::vector<double>> tracking_error;
  /// Indexed [delta][time]: d_X(S_delta(t) x0, Gamma_0(t) x0).
  std::vector<std::vector<double>> phase_gap;

  double initial_defect = 0.0;
  double gamma_path = 0.0;
  /// Per delta: fitted exponential decay rate of the state defect over the initial layer.
  std::vector<double> layer_rate;
  /// Per delta: late-time defect level sup_{t >= T/2} state_defect.
  std::vector<double> plateau;
  /// Smallest C with plateau <= C delta for every delta.
  double plateau_slope = 0.0;
  /// Smallest C_T with phase_gap <= C_T (e^{-gamma_path t / delta} defect_0 + delta) on the grid.
  double c_tracking = 0.0;
  /// The same fit for the state defect alone.
  double c_defect = 0.0;
};

/// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

/// Decay rate of log(defect - plateau) on [0, t_layer], using only points where the
/// excess over the plateau is at least ten times the plateau itself.
inline double fit_layer_rate(const std::vector<double>& times, const std::vector<double>& defect,
                             double plateau, double t_layer) {
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < times.size() && times[k] <= t_layer + 1e-12; ++k) {
    const double excess = defect[k] - plateau;
    if (excess > 10.0 * plateau && excess > 1e-14) {
      xs.push_back(times[k]);
      ys.push_back(std::log(excess));
    }
  }
  return -fit_slope(xs, ys);
}

/// The bound envelope e^{-gamma_path t / delta} defect_0 + delta.
inline double tracking_envelope(double t, double delta, double gamma_path, double defect0) {
  return std::exp(-gamma_path * t / delta) * defect0 + delta;
}

/// Integrates the exact flow for each delta and the reduced flow once from (theta0, w0),
/// all on the grid config.record_dt (0.02 if unset), and compares them.
inline TrackingReport run_tracking(const ModelSpec& model, const PhasePoint& x0,
                                   const std::vector<double>& deltas, double t_final,
                                   IntegratorConfig config = {}) {
  require(!deltas.empty(), "need at least one delta");
  for (double d : deltas) require(d > 0.0, "delta must be positive");
  require(in_absorbing_set(model, x0, 1e-9), "tracking start must lie in K");
  if (config.record_dt <= 0.0) config.record_dt = 0.02;

  TrackingReport report;
  report.deltas = deltas;
  report.gamma_path =
      minorization_constants(model.generators, model.box(), 0).gamma_path;
  report.initial_defect =
      (x0.mu - stationary_law(model.generators, x0.theta)).lpNorm<1>();

  const Trajectory reduced = lift_reduced(model, integrate_reduced(model, x0.theta, x0.w, t_final, config));
  report.times = reduced.times;

  std::vector<Trajectory> exact(deltas.size());
  parallel_for(deltas.size(), [&](std::size_t k) {
    exact[k] = integrate_exact(model, x0, deltas[k], t_final, config);
  });

  const std::size_t steps = report.times.size();
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    if (exact[k].size() != steps)
      fail(ErrorKind::InvalidInput, "exact and reduced time grids differ");
    std::vector<double> defect(steps), error(steps), gap(steps);
    for (std::size_t n = 0; n < steps; ++n) {
      const PhasePoint& x = exact[k].points[n];
      const PhasePoint& y = reduced.points[n];
      defect[n] = (x.mu - stationary_law(model.generators, x.theta)).lpNorm<1>();
      error[n] = (x.theta - y.theta).norm() + (x.w - y.w).norm();
      gap[n] = phase_distance(x, y);
    }
    report.state_defect.push_back(std::move(defect));
    report.tracking_error.push_back(std::move(error));
    report.phase_gap.push_back(std::move(gap));
  }

  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const double delta = deltas[k];
    double plateau = 0.0;
    for (std::size_t n = 0; n < steps; ++n)
      if (report.times[n] >= t_final / 2) plateau = std::max(plateau, report.state_defect[k][n]);
    report.plateau.push_back(plateau);
    report.plateau_slope = std::max(report.plateau_slope, plateau / delta);
    const double t_layer = std::min(1.0, t_final / 2);
    report.layer_rate.push_back(
        fit_layer_rate(report.times, report.state_defect[k], plateau, t_layer));
    for (std::size_t n = 0; n < steps; ++n) {
      const double env =
          tracking_envelope(report.times[n], delta, report.gamma_path, report.initial_defect);
      report.c_tracking = std::max(report.c_tracking, report.phase_gap[k][n] / env);
      report.c_defect = std::max(report.c_defect, report.state_defect[k][n] / env);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Attractor proxies and their semidistance
// ---------------------------------------------------------------------------

struct AttractorSample {
  std::optional<double> delta;
  std::vector<PhasePoint> points;
  std::size_t grid_size = 0;
  double t_transient = 0.0;
  double window = 0.0;
  double stride = 0.0;
};

struct AttractorOptions {
  double t_transient = 40.0;
  double window = 5.0;
  int samples = 11;
};

/// Deterministic starts spread over the interior of K (Halton points).
inline std::vector<PhasePoint> start_grid(const ModelSpec& model, int count,
                                          double shrink = 0.95) {
  require(count >= 1, "start grid needs at least one point");
  const double r_w = critic_radius(model);
  const double w_scale = shrink * r_w / std::sqrt(static_cast<double>(model.m));
  std::vector<PhasePoint> grid;
  for (int k = 1; k <= count; ++k) {
    const auto idx = static_cast<unsigned long>(k);
    int axis = 0;
    PhasePoint x;
    x.theta.resize(model.d);
    for (int j = 0; j < model.d; ++j)
      x.theta[j] = shrink * model.R_theta * (2.0 * halton(idx, nth_prime(axis++)) - 1.0);
    x.w.resize(model.m);
    for (int j = 0; j < model.m; ++j)
      x.w[j] = w_scale * (2.0 * halton(idx, nth_prime(axis++)) - 1.0);
    Vector u(model.N - 1);
    for (int j = 0; j + 1 < model.N; ++j) u[j] = halton(idx, nth_prime(axis++));
    x.mu = cube_to_simplex(u);
    grid.push_back(x);
  }
  return grid;
}

namespace detail {

inline IntegratorConfig window_config(IntegratorConfig config, const AttractorOptions& opt) {
  require(opt.t_transient > 0.0 && opt.window >= 0.0 && opt.samples >= 1,
          "bad attractor sampling options");
  config.record_dt = opt.samples > 1 ? opt.window / (opt.samples - 1) : opt.t_transient;
  if (config.record_dt <= 0.0) config.record_dt = opt.t_transient;
  return config;
}

inline void collect_window(const Trajectory& traj, double t_transient,
                           std::vector<PhasePoint>& out) {
  for (std::size_t n = 0; n < traj.size(); ++n)
    if (traj.times[n] >= t_transient - 1e-9) out.push_back(traj.points[n]);
}

}  // namespace detail

inline AttractorSample sample_attractor_exact(const ModelSpec& model, double delta,
                                              const std::vector<PhasePoint>& starts,
                                              const AttractorOptions& opt,
                                              const IntegratorConfig& config = {}) {
  require(!starts.empty(), "start grid is empty");
  for (const PhasePoint& x : starts)
    require(in_absorbing_set(model, x, 1e-9), "attractor starts must lie in K");
  const IntegratorConfig cfg = detail::window_config(config, opt);
  const double t_end = opt.t_transient + opt.window;

  std::vector<Trajectory> runs(starts.size());
  parallel_for(starts.size(), [&](std::size_t k) {
    runs[k] = integrate_exact(model, starts[k], delta, t_end, cfg);
  });

  AttractorSample sample;
  sample.delta = delta;
  sample.grid_size = starts.size();
  sample.t_transient = opt.t_transient;
  sample.window = opt.window;
  sample.stride = cfg.record_dt;
  for (const Trajectory& traj : runs) detail::collect_window(traj, opt.t_transient, sample.points);
  return sample;
}

/// Reduced proxy on Y from the (theta, w) part of each start, lifted onto the graph of mu_theta.
inline AttractorSample sample_attractor_reduced_lifted(const ModelSpec& model,
                                                       const std::vector<PhasePoint>& starts,
                                                       const AttractorOptions& opt,
                                                       const IntegratorConfig& config = {}) {
  require(!starts.empty(), "start grid is empty");
  const IntegratorConfig cfg = detail::window_config(config, opt);
  const double t_end = opt.t_transient + opt.window;

  std::vector<Trajectory> runs(starts.size());
  parallel_for(starts.size(), [&](std::size_t k) {
    runs[k] = lift_reduced(model, integrate_reduced(model, starts[k].theta, starts[k].w, t_end, cfg));
  });

  AttractorSample sample;
  sample.grid_size = starts.size();
  sample.t_transient = opt.t_transient;
  sample.window = opt.window;
  sample.stride = cfg.record_dt;
  for (const Trajectory& traj : runs) detail::collect_window(traj, opt.t_transient, sample.points);
  return sample;
}

/// sup_{x in A} inf_{y in B} d_X(x, y).
inline double semidistance(const AttractorSample& a, const AttractorSample& b) {
  require(!a.points.empty() && !b.points.empty(), "semidistance needs two nonempty clouds");
  double sup = 0.0;
  for (const PhasePoint& x : a.points) {
    double inf = std::numeric_limits<double>::infinity();
    for (const PhasePoint& y : b.points) inf = std::min(inf, phase_distance(x, y));
    sup = std::max(sup, inf);
  }
  return sup;
}

/// dist_X(exact proxy at delta, lifted reduced proxy) for each delta of a decreasing list.
inline std::vector<std::pair<double, double>> usc_sweep(const ModelSpec& model,
                                                        const std::vector<double>& deltas,
                                                        const std::vector<PhasePoint>& starts,
                                                        const AttractorOptions& opt,
                                                        const IntegratorConfig& config = {}) {
  require(!deltas.empty(), "need at least one delta");
  for (std::size_t k = 1; k < deltas.size(); ++k)
    require(deltas[k] < deltas[k - 1], "delta list must be strictly decreasing");
  const AttractorSample reduced = sample_attractor_reduced_lifted(model, starts, opt, config);
  std::vector<std::pair<double, double>> out;
  for (double delta : deltas) {
    const AttractorSample exact = sample_attractor_exact(model, delta, starts, opt, config);
    out.emplace_back(delta, semidistance(exact, reduced));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Equilibria
// ---------------------------------------------------------------------------

struct EquilibriumResult {
  PhasePoint point;
  /// Euclidean norm of the full vector field at `point`.
  double residual = 0.0;
  /// Some |theta_j| within 1e-6 of R_theta: possibly an artifact of the confinement.
  bool on_boundary = false;
  /// False when Newton failed and `point` is the integration endpoint.
  bool newton_converged = false;
};

namespace detail {

inline Vector pack_field(const ModelSpec& model, const Vector& y, double delta) {
  const Tangent v = exact_field(model, y.head(model.d), y.segment(model.d, model.m),
                                y.tail(model.N), delta);
  Vector out(y.size());
  out << v.dtheta, v.dw, v.dmu;
  return out;
}

// Field with the redundant last mu equation replaced by the mass constraint.
inline Vector newton_residual(const ModelSpec& model, const Vector& y, double delta) {
  Vector r = pack_field(model, y, delta);
  r[r.size() - 1] = y.tail(model.N).sum() - 1.0;
  return r;
}

}  // namespace detail

/// Long integration (up to T = 200, stopping once |F| < 1e-10), then damped Newton with a
/// central-difference Jacobian on the full field.
inline EquilibriumResult find_equilibrium(const ModelSpec& model, double delta,
                                          const PhasePoint& x0, IntegratorConfig config = {}) {
  require(delta > 0.0, "delta must be positive");
  require(in_absorbing_set(model, x0, 1e-9), "equilibrium search must start in K");
  if (config.dt > 0.01) config.dt = 0.01;
  config.record_dt = 0.0;
  config.record_every = 1 << 30;

  const detail::Layout layout{model.d, model.m, model.N};
  PhasePoint x = x0;
  for (double t = 0.0; t < 200.0; t += 10.0) {
    x = integrate_exact(model, x, delta, 10.0, config).back();
    if (detail::pack_field(model, layout.pack(x), delta).norm() < 1e-10) break;
  }

  EquilibriumResult result;
  Vector y = layout.pack(x);
  const Eigen::Index n = y.size();
  double norm = detail::newton_residual(model, y, delta).norm();
  const double h = 1e-6;
  for (int iter = 0; iter < 50 && norm > 1e-14; ++iter) {
    Matrix jac(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      Vector yp = y, ym = y;
      yp[j] += h;
      ym[j] -= h;
      jac.col(j) = (detail::newton_residual(model, yp, delta) -
                    detail::newton_residual(model, ym, delta)) /
                   (2 * h);
    }
    const Vector r = detail::newton_residual(model, y, delta);
    const Vector step = jac.fullPivLu().solve(-r);
    if (!step.allFinite()) break;
    double lambda = 1.0;
    bool improved = false;
    for (int k = 0; k < 30; ++k, lambda /= 2) {
      const Vector trial = y + lambda * step;
      const double trial_norm = detail::newton_residual(model, trial, delta).norm();
      if (trial_norm < norm) {
        y = trial;
        norm = trial_norm;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }

  const PhasePoint candidate = layout.unpack(y);
  const double field = detail::pack_field(model, y, delta).norm();
  if (field < 1e-9 && in_absorbing_set(model, candidate, 1e-6)) {
    result.point = candidate;
    result.residual = field;
    result.newton_converged = true;
  } else {
    result.point = x;
    result.residual = detail::pack_field(model, layout.pack(x), delta).norm();
  }
  result.on_boundary =
      (result.point.theta.array().abs() >= model.R_theta - 1e-6).any();
  return result;
}

// ---------------------------------------------------------------------------
// Constants ledger
// ---------------------------------------------------------------------------

enum class Relation {
  /// The theoretical value must dominate the empirical one.
  UpperBound,
  /// The theoretical value must be dominated by the empirical one (e.g. a minorization floor).
  LowerBound,
  /// Grid estimate or definition; passes when finite.
  Estimate,
};

inline const char* to_string(Relation r) {
  switch (r) {
    case Relation::UpperBound: return "upper_bound";
    case Relation::LowerBound: return "lower_bound";
    case Relation::Estimate: return "estimate";
  }
  return "unknown";
}

struct LedgerEntry {
  std::string name;
  double theoretical = 0.0;
  double empirical = std::numeric_limits<double>::quiet_NaN();
  Relation relation = Relation::Estimate;
  bool pass = true;
};

struct ConstantsLedger {
  std::vector<LedgerEntry> entries;
  MixingEstimate mixing;
  MinorizationConstants minorization;
  bool minorization_available = false;

  bool all_pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
  }
  const LedgerEntry& at(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return e;
    fail(ErrorKind::InvalidInput, "no ledger entry named " + name);
  }
  double value(const std::string& name) const { return at(name).theoretical; }
};

struct LedgerGrids {
  int theta_samples = 101;
  int k_samples = 2000;
  double t_max = 10.0;
  int t_samples = 101;
  int path_samples = 200;
  int trajectory_starts = 8;
  std::uint64_t seed = 12345;
};

inline ConstantsLedger build_constants_ledger(const ModelSpec& model, const LedgerGrids& grids = {}) {
  validate_model(model);
  ConstantsLedger ledger;
  constexpr double kSlack = 1e-9;
  auto add = [&](std::string name, double theory, double emp, Relation rel) {
    LedgerEntry e{std::move(name), theory, emp, rel, true};
    switch (rel) {
      case Relation::UpperBound: e.pass = !(emp > theory * (1 + kSlack) + kSlack); break;
      case Relation::LowerBound: e.pass = !(emp < theory * (1 - kSlack) - kSlack); break;
      case Relation::Estimate: e.pass = !std::isnan(theory); break;
    }
    ledger.entries.push_back(std::move(e));
  };

  const ParameterBox box = model.box();
  const double m_r = model.rewards.cwiseAbs().maxCoeff();
  const double m_phi = model.critic_features.rowwise().norm().maxCoeff();
  const double b_b = m_r * m_phi;
  const double r_w = std::max(1.0, 2.0 * b_b / model.lambda_c);

  // K samples: Halton points over K plus the theta-box vertices at extreme critic values.
  std::vector<PhasePoint> k_points = start_grid(model, grids.k_samples, 1.0);
  for (unsigned long v = 0; v < box.vertex_count() && v < 64; ++v)
    for (double sign : {-1.0, 1.0})
      for (int i = 0; i < model.N; ++i) {
        PhasePoint x{box.vertex(v), Vector::Constant(model.m, sign * r_w / std::sqrt(model.m)),
                     Vector::Unit(model.N, i)};
        k_points.push_back(x);
      }

  double b_emp = 0.0, g_sup = 0.0;
  for (const PhasePoint& x : k_points) {
    const Matrix nu = detail::occupancy_of(softmax_policy(model.actor, x.theta), x.mu);
    b_emp = std::max(b_emp, detail::critic_b_of(model, nu).norm());
    g_sup = std::max(g_sup, detail::damping_of(model, x.theta)
                                .cwiseProduct(detail::actor_gtilde_of(model, x.theta, x.w, x.mu))
                                .norm());
  }

  // Trajectories from K at delta = 1 for forward invariance and the actor speed.
  IntegratorConfig cfg;
  cfg.dt = 0.01;
  const std::vector<PhasePoint> starts = start_grid(model, grids.trajectory_starts, 1.0);
  std::vector<double> w_max(starts.size()), speed(starts.size());
  parallel_for(starts.size(), [&](std::size_t k) {
    const Trajectory traj = integrate_exact(model, starts[k], 1.0, 10.0, cfg);
    for (const PhasePoint& x : traj.points) {
      w_max[k] = std::max(w_max[k], x.w.norm());
      const Tangent v = detail::exact_field(model, x.theta, x.w, x.mu, 1.0);
      speed[k] = std::max(speed[k], v.dtheta.norm());
    }
  });

  add("M_r", m_r, m_r, Relation::Estimate);
  add("M_phi", m_phi, m_phi, Relation::Estimate);
  add("B_b", b_b, b_emp, Relation::UpperBound);
  add("R_w", r_w, *std::max_element(w_max.begin(), w_max.end()), Relation::UpperBound);

  const double lq = lipschitz_LQ(model.generators);
  add("L_Q", lq, empirical_lipschitz_LQ(model.generators, box, grids.theta_samples),
      Relation::UpperBound);

  ledger.mixing = estimate_mixing(model.generators, box, grids.theta_samples, grids.t_max,
                                  grids.t_samples);
  add("C_mix", ledger.mixing.c_mix, ledger.mixing.c_mix, Relation::Estimate);
  add("gamma", ledger.mixing.gamma, ledger.mixing.gamma, Relation::Estimate);

  const double l_mu = invariant_law_lipschitz_bound(ledger.mixing, lq);
  double mu_slope = 0.0;
  for (const auto& [a, b] : theta_pairs(box, grids.theta_samples)) {
    const double gap = (a - b).norm();
    if (gap < 1e-14) continue;
    mu_slope = std::max(mu_slope, (stationary_law(model.generators, a) -
                                   stationary_law(model.generators, b))
                                          .lpNorm<1>() /
                                      gap);
  }
  add("L_mu", l_mu, mu_slope, Relation::UpperBound);

  try {
    ledger.minorization = minorization_constants(model.generators, box, 0, grids.theta_samples);
    ledger.minorization_available = true;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::MinorizationFailure) throw;
    LedgerEntry entry{"q_under", 0.0, 0.0, Relation::LowerBound, false};
    ledger.entries.push_back(entry);
  }

  if (ledger.minorization_available) {
    const MinorizationConstants& mc = ledger.minorization;
    // Empirical side from random piecewise-constant paths.
    std::mt19937_64 rng(grids.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double block_min = 1.0, contraction = 0.0;
    double q_min = std::numeric_limits<double>::infinity(), q_max = 0.0;
    for (int s = 0; s < grids.path_samples; ++s) {
      PiecewiseConstantPath path;
      double r = 0.0;
      for (int k = 0; k < 5; ++k) {
        Vector theta(model.d);
        for (int j = 0; j < model.d; ++j) theta[j] = model.R_theta * (2 * unit(rng) - 1);
        const Matrix q = eval_generator(model.generators, theta);
        for (int i = 0; i < model.N; ++i) {
          q_max = std::max(q_max, -q(i, i));
          if (i != mc.k_star) q_min = std::min(q_min, q(i, mc.k_star));
        }
        path.breaks.push_back(r);
        path.values.push_back(std::move(theta));
        r += 2.0 * unit(rng);
      }
      if (mc.degenerate) continue;
      const double delta = 0.05 + unit(rng);
      const double start = 2.0 * unit(rng);
      const Matrix block = pathwise_propagator(model.generators, box, path, delta, start,
                                               start + delta * mc.tau_star);
      block_min = std::min(block_min, block.row(mc.k_star).minCoeff());
      const double end = start + 6.0 * unit(rng);
      const Matrix u = pathwise_propagator(model.generators, box, path, delta, start, end);
      for (int i = 0; i < model.N; ++i)
        for (int j = i + 1; j < model.N; ++j) {
          const double ratio = (u.col(i) - u.col(j)).lpNorm<1>() / 2.0;
          contraction = std::max(contraction,
                                 ratio * std::exp(mc.gamma_path * (end - start) / delta));
        }
    }
    if (mc.degenerate) {
      add("C_path", 1.0, 1.0, Relation::Estimate);
      add("gamma_path", 1.0, 1.0, Relation::Estimate);
    } else {
      add("q_under", mc.q_under, q_min, Relation::LowerBound);
      add("q_bar", mc.q_bar, q_max, Relation::UpperBound);
      add("tau_star", mc.tau_star, mc.tau_star, Relation::Estimate);
      add("alpha_star", mc.alpha_star, block_min, Relation::LowerBound);
      add("alpha_star_max", std::exp(-1.0), mc.alpha_star, Relation::UpperBound);
      add("C_path", mc.c_path, contraction, Relation::UpperBound);
      add("gamma_path", mc.gamma_path, mc.gamma_path, Relation::Estimate);
    }
  }

  add("M_G", g_sup, *std::max_element(speed.begin(), speed.end()), Relation::UpperBound);
  return ledger;
}

}  // namespace acflow
