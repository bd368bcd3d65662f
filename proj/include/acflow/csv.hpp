#pragma once

#include "acflow/analysis.hpp"
#include "acflow/integrate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace acflow {

/// Explicit delta -> column tag overrides, e.g. {0.25, "025"}.
using TagMap = std::map<double, std::string>;

/// Nine significant digits.
inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Column tag of a delta: the decimal point is dropped, so 1 -> "1", 0.5 -> "05",
/// 0.1 -> "01". Non-integers must have a single nonzero digit to keep tags unique.
inline std::string delta_tag(double delta, const TagMap& custom = {}) {
  for (const auto& [value, tag] : custom)
    if (std::abs(value - delta) <= 1e-12 * std::max(1.0, std::abs(value))) return tag;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", delta);
  const std::string text = buf;
  if (!(delta > 0.0) || text.find_first_of("eE") != std::string::npos)
    fail(ErrorKind::NamingScheme, "no column tag for delta " + text);
  const auto dot = text.find('.');
  if (dot == std::string::npos) return text;
  std::string tag;
  int nonzero = 0;
  for (char c : text) {
    if (c == '.') continue;
    tag += c;
    if (c != '0') ++nonzero;
  }
  if (nonzero != 1)
    fail(ErrorKind::NamingScheme,
         "no column tag for delta " + text + "; supply a custom tag map");
  return tag;
}

inline std::string tracking_csv_header(const std::vector<double>& deltas, const TagMap& custom = {}) {
  std::string header = "t";
  for (double d : deltas) header += ",state_defect_" + delta_tag(d, custom);
  for (double d : deltas) header += ",tracking_error_" + delta_tag(d, custom);
  return header;
}

inline void write_tracking_csv(const TrackingReport& report, std::ostream& out,
                               const TagMap& custom = {}) {
  out << tracking_csv_header(report.deltas, custom) << '\n';
  for (std::size_t n = 0; n < report.times.size(); ++n) {
    out << format_value(report.times[n]);
    for (const auto& series : report.state_defect) out << ',' << format_value(series[n]);
    for (const auto& series : report.tracking_error) out << ',' << format_value(series[n]);
    out << '\n';
  }
}

inline void emit_tracking_csv(const TrackingReport& report, const std::string& path,
                              const TagMap& custom = {}) {
  std::ostringstream buffer;  // tags are checked before the file is touched
  write_tracking_csv(report, buffer, custom);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::InvalidInput, "cannot write " + path);
  out << buffer.str();
}

/// t, theta_1..theta_d, w_1..w_m, mu_1..mu_N (mu columns omitted for reduced runs).
inline void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  if (traj.points.empty()) return;
  const PhasePoint& first = traj.points.front();
  out << 't';
  for (Eigen::Index j = 0; j < first.theta.size(); ++j) out << ",theta_" << j + 1;
  for (Eigen::Index j = 0; j < first.w.size(); ++j) out << ",w_" << j + 1;
  for (Eigen::Index j = 0; j < first.mu.size(); ++j) out << ",mu_" << j + 1;
  out << '\n';
  for (std::size_t n = 0; n < traj.size(); ++n) {
    const PhasePoint& x = traj.points[n];
    out << format_value(traj.times[n]);
    for (Eigen::Index j = 0; j < x.theta.size(); ++j) out << ',' << format_value(x.theta[j]);
    for (Eigen::Index j = 0; j < x.w.size(); ++j) out << ',' << format_value(x.w[j]);
    for (Eigen::Index j = 0; j < x.mu.size(); ++j) out << ',' << format_value(x.mu[j]);
    out << '\n';
  }
}

inline void write_ledger_csv(const ConstantsLedger& ledger, std::ostream& out) {
  out << "name,theoretical,empirical,relation,pass\n";
  for (const LedgerEntry& e : ledger.entries)
    out << e.name << ',' << format_value(e.theoretical) << ',' << format_value(e.empirical) << ','
        << to_string(e.relation) << ',' << (e.pass ? "pass" : "fail") << '\n';
}

inline void write_sweep_csv(const std::vector<std::pair<double, double>>& sweep, std::ostream& out) {
  out << "delta,dist\n";
  for (const auto& [delta, dist] : sweep) out << format_value(delta) << ',' << format_value(dist) << '\n';
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (std::getline(in, line)) table.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const std::string& cell : split(line)) row.push_back(std::stod(cell));
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace acflow
