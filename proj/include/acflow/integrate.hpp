#pragma once

#include "acflow/core.hpp"
#include "acflow/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace acflow {

enum class Method { FixedRK4, AdaptiveRK45 };

struct IntegratorConfig {
  Method method = Method::FixedRK4;
  /// Base step of the fixed method; the initial trial step of the adaptive one.
  double dt = 1e-3;
  double rtol = 1e-8;
  double atol = 1e-10;
  double dt_min = 1e-12;
  double dt_max = 0.1;
  /// Fixed steps are capped at c_fast * delta on the exact system.
  double c_fast = 0.2;
  bool guard = true;
  /// Record every n-th step, unless record_dt > 0 requests a uniform time grid.
  int record_every = 1;
  double record_dt = 0.0;

  void validate() const {
    require(dt > 0.0, "dt must be positive");
    require(c_fast > 0.0 && c_fast <= 1.0, "c_fast must lie in (0, 1]");
    require(rtol > 0.0 && atol > 0.0, "rtol and atol must be positive");
    require(dt_min > 0.0 && dt_max >= dt_min, "need 0 < dt_min <= dt_max");
    require(record_every >= 1, "record_every must be at least 1");
    require(record_dt >= 0.0, "record_dt must be nonnegative");
  }
};

inline constexpr double kDriftBudget = 1e-4;

struct GuardEvents {
  long count = 0;
  double max_magnitude = 0.0;

  void note(double magnitude) {
    if (magnitude > 0.0) {
      ++count;
      max_magnitude = std::max(max_magnitude, magnitude);
    }
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<PhasePoint> points;
  /// Empty for reduced trajectories.
  std::optional<double> delta;
  IntegratorConfig config;
  GuardEvents guard_events;

  const PhasePoint& back() const { return points.back(); }
  std::size_t size() const { return times.size(); }
};

/// Clamps theta into the box and mu onto the simplex. The correction magnitude is the
/// largest of the theta overshoot, the clipped negative mass and the renormalization
/// defect; anything above 1e-4 is reported as integration drift.
inline PhasePoint guard_project(const ModelSpec& model, const PhasePoint& raw,
                                GuardEvents* events = nullptr) {
  PhasePoint x = raw;
  double magnitude = 0.0;
  const double r = model.R_theta;
  for (Eigen::Index j = 0; j < x.theta.size(); ++j) {
    const double clipped = std::clamp(x.theta[j], -r, r);
    magnitude = std::max(magnitude, std::abs(clipped - x.theta[j]));
    x.theta[j] = clipped;
  }
  if (x.mu.size() > 0) {
    for (Eigen::Index i = 0; i < x.mu.size(); ++i) {
      if (x.mu[i] < 0.0) {
        magnitude = std::max(magnitude, -x.mu[i]);
        x.mu[i] = 0.0;
      }
    }
    const double total = x.mu.sum();
    magnitude = std::max(magnitude, std::abs(total - 1.0));
    if (total > 0.0) x.mu /= total;
  }
  if (magnitude > kDriftBudget)
    fail(ErrorKind::IntegrationDrift,
         "projection of size " + std::to_string(magnitude) +
             " exceeds the drift budget; reduce the step size");
  if (events) events->note(magnitude);
  return x;
}

namespace detail {

struct Layout {
  int d = 0;
  int m = 0;
  int n = 0;  // 0 for reduced states

  Vector pack(const PhasePoint& x) const {
    Vector y(d + m + n);
    y.head(d) = x.theta;
    y.segment(d, m) = x.w;
    if (n > 0) y.tail(n) = x.mu;
    return y;
  }
  PhasePoint unpack(const Vector& y) const {
    PhasePoint x;
    x.theta = y.head(d);
    x.w = y.segment(d, m);
    if (n > 0) x.mu = y.tail(n);
    return x;
  }
};

using Rhs = std::function<Vector(const Vector&)>;
using Projection = std::function<Vector(const Vector&)>;

inline void check_finite(const Vector& y, double t) {
  if (!y.allFinite())
    fail(ErrorKind::Divergence, "state became non-finite at t = " + std::to_string(t));
}

inline Vector rk4_step(const Rhs& f, const Vector& y, double h) {
  const Vector k1 = f(y);
  const Vector k2 = f(y + h / 2 * k1);
  const Vector k3 = f(y + h / 2 * k2);
  const Vector k4 = f(y + h * k3);
  return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
}

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
  static constexpr double c[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1, 1};
  static constexpr double a[7][6] = {
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {44.0 / 45, -56.0 / 15, 32.0 / 9},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
      {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
  static constexpr double b5[7] = {35.0 / 384,     0, 500.0 / 1113, 125.0 / 192,
                                   -2187.0 / 6784, 11.0 / 84, 0};
  static constexpr double b4[7] = {5179.0 / 57600,     0,           7571.0 / 16695, 393.0 / 640,
                                   -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
};

// Returns the fifth-order solution and writes the embedded error estimate.
inline Vector dopri_step(const Rhs& f, const Vector& y, double h, Vector& err) {
  using T = DormandPrince;
  Vector k[7];
  k[0] = f(y);
  for (int s = 1; s < 7; ++s) {
    Vector ys = y;
    for (int j = 0; j < s; ++j)
      if (T::a[s][j] != 0.0) ys += h * T::a[s][j] * k[j];
    k[s] = f(ys);
  }
  Vector y5 = y;
  err = Vector::Zero(y.size());
  for (int s = 0; s < 7; ++s) {
    y5 += h * T::b5[s] * k[s];
    err += h * (T::b5[s] - T::b4[s]) * k[s];
  }
  return y5;
}

struct Recorder {
  std::vector<double>* times;
  std::vector<Vector>* states;
  void operator()(double t, const Vector& y) const {
    times->push_back(t);
    states->push_back(y);
  }
};

// Time targets: the recording grid (if any) then T.
inline std::vector<double> record_targets(double t_final, const IntegratorConfig& cfg) {
  std::vector<double> targets;
  if (cfg.record_dt > 0.0) {
    const long count = static_cast<long>(std::floor(t_final / cfg.record_dt + 1e-9));
    for (long k = 1; k <= count; ++k) targets.push_back(std::min(t_final, k * cfg.record_dt));
    if (targets.empty() || t_final - targets.back() > 1e-12 * std::max(1.0, t_final))
      targets.push_back(t_final);
    else
      targets.back() = t_final;
  } else {
    targets.push_back(t_final);
  }
  return targets;
}

inline void run_fixed(const Rhs& f, const Projection& project, Vector y, double t_final,
                      double h_cap, const IntegratorConfig& cfg, std::vector<double>& times,
                      std::vector<Vector>& states) {
  Recorder rec{&times, &states};
  rec(0.0, y);
  double t = 0.0;
  long step = 0;
  for (double target : record_targets(t_final, cfg)) {
    const double span = target - t;
    const long n = std::max(1L, static_cast<long>(std::ceil(span / h_cap - 1e-9)));
    const double h = span / n;
    for (long k = 0; k < n; ++k) {
      y = project(rk4_step(f, y, h));
      t = (k + 1 == n) ? target : t + h;
      check_finite(y, t);
      ++step;
      if (cfg.record_dt == 0.0 && step % cfg.record_every == 0 && k + 1 != n) rec(t, y);
    }
    rec(t, y);
  }
}

inline void run_adaptive(const Rhs& f, const Projection& project, Vector y, double t_final,
                         const IntegratorConfig& cfg, std::vector<double>& times,
                         std::vector<Vector>& states) {
  Recorder rec{&times, &states};
  rec(0.0, y);
  double t = 0.0;
  double h = std::min(cfg.dt, cfg.dt_max);
  double err_prev = 1.0;
  long accepted = 0;
  for (double target : record_targets(t_final, cfg)) {
    while (t < target) {
      const bool last = t + h >= target;
      const double step = last ? target - t : h;
      Vector err;
      Vector y_new = dopri_step(f, y, step, err);
      double norm = 0.0;
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double scale = cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
        norm += (err[i] / scale) * (err[i] / scale);
      }
      norm = std::sqrt(norm / static_cast<double>(y.size()));
      if (!std::isfinite(norm)) norm = 1e10;
      if (norm <= 1.0) {
        y = project(y_new);
        t = last ? target : t + step;
        check_finite(y, t);
        ++accepted;
        if (cfg.record_dt == 0.0 && accepted % cfg.record_every == 0 && t < target) rec(t, y);
        // PI controller.
        const double e = std::max(norm, 1e-10);
        double factor = 0.9 * std::pow(e, -0.7 / 5.0) * std::pow(err_prev, 0.4 / 5.0);
        factor = std::clamp(factor, 0.2, 5.0);
        err_prev = e;
        if (!last || step >= h) h = std::min(cfg.dt_max, h * factor);
      } else {
        h = step * std::max(0.2, 0.9 * std::pow(norm, -1.0 / 5.0));
        if (h < cfg.dt_min)
          fail(ErrorKind::Stiffness,
               "adaptive step fell below dt_min at t = " + std::to_string(t) +
                   "; use a smaller c_fast or a finer fixed step");
      }
    }
    rec(t, y);
  }
}

inline void run(const Rhs& f, const Projection& project, const Vector& y0, double t_final,
                double h_cap, const IntegratorConfig& cfg, std::vector<double>& times,
                std::vector<Vector>& states) {
  if (cfg.method == Method::FixedRK4)
    run_fixed(f, project, y0, t_final, h_cap, cfg, times, states);
  else
    run_adaptive(f, project, y0, t_final, cfg, times, states);
}

}  // namespace detail

/// Numerical flow of the full (theta, w, mu) system.
inline Trajectory integrate_exact(const ModelSpec& model, const PhasePoint& x0, double delta,
                                  double t_final, const IntegratorConfig& config = {}) {
  require(delta > 0.0, "delta must be positive");
  require(t_final > 0.0, "final time must be positive");
  config.validate();
  check_point(model, x0);

  const detail::Layout layout{model.d, model.m, model.N};
  Trajectory traj;
  traj.delta = delta;
  traj.config = config;

  auto f = [&](const Vector& y) {
    const Tangent v = detail::exact_field(model, y.head(layout.d), y.segment(layout.d, layout.m),
                                          y.tail(layout.n), delta);
    Vector out(y.size());
    out << v.dtheta, v.dw, v.dmu;
    return out;
  };
  auto project = [&](const Vector& y) -> Vector {
    if (!config.guard) return y;
    return layout.pack(guard_project(model, layout.unpack(y), &traj.guard_events));
  };

  std::vector<Vector> states;
  const double h_cap = std::min(config.dt, config.c_fast * delta);
  detail::run(f, project, layout.pack(guard_project(model, x0)), t_final, h_cap, config,
              traj.times, states);
  traj.points.reserve(states.size());
  for (const Vector& y : states) traj.points.push_back(layout.unpack(y));
  return traj;
}

/// Numerical flow of the invariant-law system on (theta, w).
inline Trajectory integrate_reduced(const ModelSpec& model, const Vector& theta0,
                                    const Vector& w0, double t_final,
                                    const IntegratorConfig& config = {}) {
  require(t_final > 0.0, "final time must be positive");
  config.validate();
  check_theta(model, theta0);
  require(w0.size() == model.m, "w0 has wrong dimension");

  const detail::Layout layout{model.d, model.m, 0};
  Trajectory traj;
  traj.config = config;

  auto f = [&](const Vector& y) {
    const ReducedTangent v =
        detail::reduced_field(model, y.head(layout.d), y.segment(layout.d, layout.m));
    Vector out(y.size());
    out << v.dtheta, v.dw;
    return out;
  };
  auto project = [&](const Vector& y) -> Vector {
    if (!config.guard) return y;
    return layout.pack(guard_project(model, layout.unpack(y), &traj.guard_events));
  };

  std::vector<Vector> states;
  detail::run(f, project, layout.pack(PhasePoint{model.box().clip(theta0), w0, {}}), t_final,
              config.dt, config, traj.times, states);
  traj.points.reserve(states.size());
  for (const Vector& y : states) traj.points.push_back(layout.unpack(y));
  return traj;
}

/// Attaches mu = mu_theta(t) to each reduced point.
inline Trajectory lift_reduced(const ModelSpec& model, const Trajectory& reduced) {
  require(!reduced.delta.has_value(), "lift_reduced expects a reduced trajectory");
  Trajectory lifted = reduced;
  for (PhasePoint& x : lifted.points) x.mu = stationary_law(model.generators, x.theta);
  return lifted;
}

}  // namespace acflow
