#pragma once

#include "acflow/analysis.hpp"
#include "acflow/builtins.hpp"
#include "acflow/config.hpp"
#include "acflow/csv.hpp"
#include "acflow/integrate.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace acflow {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitUsage = 2, kExitNumeric = 3 };

namespace cli {

struct ModelSource {
  std::string config;
  std::string builtin;

  ModelSpec load() const {
    if (!builtin.empty()) {
      if (builtin == "two-state") return builtin_two_state();
      throw CLI::ValidationError("--builtin", "unknown builtin model '" + builtin + "'");
    }
    if (config.empty()) throw CLI::ValidationError("config", "give a config file or --builtin");
    return load_model(config);
  }
};

struct IntegratorFlags {
  double dt = 1e-3;
  std::string method = "fixed";
  double c_fast = 0.2;
  double rtol = 1e-8;
  double atol = 1e-10;
  double dt_min = 1e-12;
  bool no_guard = false;

  IntegratorConfig config() const {
    IntegratorConfig cfg;
    cfg.dt = dt;
    cfg.method = method == "adaptive" ? Method::AdaptiveRK45 : Method::FixedRK4;
    cfg.c_fast = c_fast;
    cfg.rtol = rtol;
    cfg.atol = atol;
    cfg.dt_min = dt_min;
    cfg.guard = !no_guard;
    return cfg;
  }
};

inline void add_model_flags(CLI::App* app, ModelSource& src) {
  app->add_option("config", src.config, "Model config (JSON)");
  app->add_option("--builtin", src.builtin, "Builtin model instead of a config")
      ->check(CLI::IsMember({"two-state"}));
}

inline void add_integrator_flags(CLI::App* app, IntegratorFlags& flags) {
  app->add_option("--dt", flags.dt, "Base step")->check(CLI::PositiveNumber);
  app->add_option("--method", flags.method, "fixed (RK4) or adaptive (RK45)")
      ->check(CLI::IsMember({"fixed", "adaptive"}));
  app->add_option("--c-fast", flags.c_fast, "Fast-step cap factor: h <= c_fast * delta")
      ->check(CLI::Range(1e-12, 1.0));
  app->add_option("--rtol", flags.rtol, "Adaptive relative tolerance")->check(CLI::PositiveNumber);
  app->add_option("--atol", flags.atol, "Adaptive absolute tolerance")->check(CLI::PositiveNumber);
  app->add_option("--dt-min", flags.dt_min, "Smallest adaptive step before giving up")
      ->check(CLI::PositiveNumber);
  app->add_flag("--no-guard", flags.no_guard, "Disable simplex/box projection");
}

/// Parses a flat x0 list: theta (d), w (m), then either N or N-1 entries of mu.
inline PhasePoint parse_x0(const ModelSpec& model, const std::vector<double>& values) {
  const std::size_t head = static_cast<std::size_t>(model.d + model.m);
  const std::size_t full = head + model.N;
  if (values.size() != full && values.size() != full - 1)
    throw CLI::ValidationError("--x0", "expected " + std::to_string(full - 1) + " or " +
                                           std::to_string(full) + " values");
  PhasePoint x;
  x.theta = Eigen::Map<const Vector>(values.data(), model.d);
  x.w = Eigen::Map<const Vector>(values.data() + model.d, model.m);
  x.mu.resize(model.N);
  double rest = 1.0;
  for (int i = 0; i < model.N; ++i) {
    if (head + i < values.size()) {
      x.mu[i] = values[head + i];
      rest -= x.mu[i];
    } else {
      x.mu[i] = rest;
    }
  }
  if (!in_absorbing_set(model, x, 1e-9) && !(model.box().contains(x.theta) && in_simplex(x.mu)))
    throw CLI::ValidationError("--x0", "initial point must lie in the state space");
  return x;
}

inline PhasePoint default_x0(const ModelSpec& model) {
  return {Vector::Zero(model.d), Vector::Zero(model.m), Vector::Constant(model.N, 1.0 / model.N)};
}

inline TagMap parse_tag_map(const std::vector<std::string>& entries) {
  TagMap map;
  for (const std::string& e : entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--tag", "expected DELTA=TAG, got '" + e + "'");
    try {
      map[std::stod(e.substr(0, eq))] = e.substr(eq + 1);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--tag", "bad delta in '" + e + "'");
    }
  }
  return map;
}

/// Writes the buffered body to path, or to stdout for '-'.
inline void emit(const std::string& path, std::ostream& stdout_stream,
                 const std::function<void(std::ostream&)>& body) {
  std::ostringstream buffer;
  body(buffer);
  if (path.empty() || path == "-") {
    stdout_stream << buffer.str();
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorKind::InvalidInput, "cannot write " + path);
  file << buffer.str();
}

inline void print_ledger(const ConstantsLedger& ledger, std::ostream& out) {
  for (const LedgerEntry& e : ledger.entries)
    out << std::left << std::setw(16) << e.name << std::setw(16) << format_value(e.theoretical)
        << std::setw(16) << format_value(e.empirical) << std::setw(13) << to_string(e.relation)
        << (e.pass ? "pass" : "FAIL") << '\n';
}

}  // namespace cli

/// Entry point of the command-line tool. Exit codes: 0 ok, 1 validation failure,
/// 2 usage error, 3 numeric failure.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"Actor-critic mean dynamics with a co-evolving state law"};
  app.name("acflow");
  app.require_subcommand(1);

  ModelSource src;
  IntegratorFlags integ;
  std::string out_path = "-";
  double delta = 0.0, t_final = 0.0, record_dt = 0.0, transient = 40.0, window = 5.0;
  int grid = 9, samples = 11;
  std::uint64_t seed = 12345;
  std::vector<double> x0_values, deltas;
  std::vector<std::string> tags;

  auto* validate = app.add_subcommand("validate", "Validate a model and check its constants ledger");
  add_model_flags(validate, src);
  validate->add_option("--seed", seed, "Seed for the random path samples");

  auto* simulate = app.add_subcommand("simulate", "Integrate the full system");
  add_model_flags(simulate, src);
  add_integrator_flags(simulate, integ);
  simulate->add_option("--delta", delta, "Time-scale ratio")->required()->check(CLI::PositiveNumber);
  simulate->add_option("--t-final", t_final, "Final time")->required()->check(CLI::PositiveNumber);
  simulate->add_option("--x0", x0_values, "theta..., w..., mu...")->delimiter(',');
  simulate->add_option("--record-dt", record_dt, "Recording interval")->check(CLI::NonNegativeNumber);
  simulate->add_option("--out", out_path, "Output CSV ('-' for stdout)");

  auto* reduce = app.add_subcommand("reduce", "Integrate the invariant-law system on (theta, w)");
  add_model_flags(reduce, src);
  add_integrator_flags(reduce, integ);
  reduce->add_option("--t-final", t_final, "Final time")->required()->check(CLI::PositiveNumber);
  reduce->add_option("--x0", x0_values, "theta..., w...")->delimiter(',');
  reduce->add_option("--record-dt", record_dt, "Recording interval")->check(CLI::NonNegativeNumber);
  reduce->add_option("--out", out_path, "Output CSV ('-' for stdout)");

  auto* tracking = app.add_subcommand("tracking", "State-law defect and tracking error per delta");
  add_model_flags(tracking, src);
  add_integrator_flags(tracking, integ);
  tracking->add_option("--deltas", deltas, "Comma-separated deltas")
      ->delimiter(',')
      ->required()
      ->check(CLI::PositiveNumber);
  tracking->add_option("--x0", x0_values, "theta..., w..., mu...")->delimiter(',');
  t_final = 0.0;
  tracking->add_option("--t-final", t_final, "Final time (default 8)")->check(CLI::PositiveNumber);
  tracking->add_option("--record-dt", record_dt, "Time grid stride (default 0.02)")
      ->check(CLI::PositiveNumber);
  tracking->add_option("--tag", tags, "Custom column tag DELTA=TAG")->delimiter(',');
  tracking->add_option("--out", out_path, "Output CSV ('-' for stdout)");

  auto* attractor = app.add_subcommand("attractor", "Semidistance of exact to lifted reduced attractor proxies");
  add_model_flags(attractor, src);
  add_integrator_flags(attractor, integ);
  attractor->add_option("--deltas", deltas, "Decreasing comma-separated deltas")
      ->delimiter(',')
      ->required()
      ->check(CLI::PositiveNumber);
  attractor->add_option("--grid", grid, "Number of starts in K")->check(CLI::PositiveNumber);
  attractor->add_option("--transient", transient, "Transient time")->check(CLI::PositiveNumber);
  attractor->add_option("--window", window, "Sampling window")->check(CLI::NonNegativeNumber);
  attractor->add_option("--samples", samples, "Samples per window")->check(CLI::PositiveNumber);
  attractor->add_option("--out", out_path, "Output CSV ('-' for stdout)");

  auto* constants = app.add_subcommand("constants", "Write the constants ledger");
  add_model_flags(constants, src);
  constants->add_option("--seed", seed, "Seed for the random path samples");
  constants->add_option("--out", out_path, "Output CSV ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  std::string stage = "loading the model";
  try {
    const ModelSpec model = src.load();
    IntegratorConfig cfg = integ.config();

    if (validate->parsed() || constants->parsed()) {
      stage = "building the constants ledger";
      LedgerGrids grids;
      grids.seed = seed;
      const ConstantsLedger ledger = build_constants_ledger(model, grids);
      if (validate->parsed()) {
        print_ledger(ledger, out);
        out << (ledger.all_pass() ? "model valid, all checks pass\n" : "ledger check failed\n");
        return ledger.all_pass() ? kExitOk : kExitValidation;
      }
      emit(out_path, out, [&](std::ostream& o) { write_ledger_csv(ledger, o); });
      return kExitOk;
    }

    if (simulate->parsed()) {
      const PhasePoint x0 = x0_values.empty() ? default_x0(model) : parse_x0(model, x0_values);
      cfg.record_dt = record_dt;
      stage = "integrating the full system";
      const Trajectory traj = integrate_exact(model, x0, delta, t_final, cfg);
      emit(out_path, out, [&](std::ostream& o) { write_trajectory_csv(traj, o); });
      return kExitOk;
    }

    if (reduce->parsed()) {
      PhasePoint x0 = default_x0(model);
      if (!x0_values.empty()) {
        if (x0_values.size() != static_cast<std::size_t>(model.d + model.m))
          throw CLI::ValidationError("--x0", "expected theta and w only");
        x0.theta = Eigen::Map<const Vector>(x0_values.data(), model.d);
        x0.w = Eigen::Map<const Vector>(x0_values.data() + model.d, model.m);
        if (!model.box().contains(x0.theta))
          throw CLI::ValidationError("--x0", "theta must lie in the parameter box");
      }
      cfg.record_dt = record_dt;
      stage = "integrating the reduced system";
      const Trajectory traj = integrate_reduced(model, x0.theta, x0.w, t_final, cfg);
      emit(out_path, out, [&](std::ostream& o) { write_trajectory_csv(traj, o); });
      return kExitOk;
    }

    if (tracking->parsed()) {
      const PhasePoint x0 = x0_values.empty() ? default_x0(model) : parse_x0(model, x0_values);
      if (!in_absorbing_set(model, x0, 1e-9))
        throw CLI::ValidationError("--x0", "tracking start must lie in K");
      const TagMap tag_map = parse_tag_map(tags);
      stage = "naming the output columns";
      tracking_csv_header(deltas, tag_map);  // reject unmappable tags before integrating
      cfg.record_dt = record_dt > 0.0 ? record_dt : 0.02;
      stage = "running the tracking experiment";
      const TrackingReport report = run_tracking(model, x0, deltas, t_final > 0 ? t_final : 8.0, cfg);
      emit(out_path, out, [&](std::ostream& o) { write_tracking_csv(report, o, tag_map); });
      return kExitOk;
    }

    if (attractor->parsed()) {
      for (std::size_t k = 1; k < deltas.size(); ++k)
        if (!(deltas[k] < deltas[k - 1]))
          throw CLI::ValidationError("--deltas", "must be strictly decreasing");
      stage = "sampling attractors";
      AttractorOptions opt{transient, window, samples};
      const auto sweep = usc_sweep(model, deltas, start_grid(model, grid), opt, cfg);
      emit(out_path, out, [&](std::ostream& o) { write_sweep_csv(sweep, o); });
      return kExitOk;
    }
  } catch (const CLI::ValidationError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error while " << stage << ": " << e.what() << '\n';
    if (e.is_numeric()) return kExitNumeric;
    if (e.kind() == ErrorKind::InvalidInput || e.kind() == ErrorKind::NamingScheme)
      return kExitUsage;
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace acflow
