#pragma once

#include "acflow/core.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace acflow {

/// Radical inverse of `index` in the given prime base.
inline double halton(unsigned long index, unsigned base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

inline unsigned nth_prime(int k) {
  static constexpr unsigned kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                                         41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};
  return kPrimes[k % 24];
}

/// A deterministic cover of the box: a uniform tensor grid with `per_axis` points per
/// coordinate when it has at most 4096 points, otherwise all vertices plus Halton points.
inline std::vector<Vector> theta_grid(const ParameterBox& box, int per_axis) {
  std::vector<Vector> grid;
  const int d = box.dim;
  if (per_axis <= 1) {
    grid.push_back(Vector::Zero(d));
    return grid;
  }
  const double total = std::pow(static_cast<double>(per_axis), d);
  if (total <= 4096.0) {
    const long count = static_cast<long>(total);
    for (long idx = 0; idx < count; ++idx) {
      Vector v(d);
      long rest = idx;
      for (int j = 0; j < d; ++j) {
        const long k = rest % per_axis;
        rest /= per_axis;
        v[j] = -box.radius + 2.0 * box.radius * static_cast<double>(k) / (per_axis - 1);
      }
      grid.push_back(v);
    }
    return grid;
  }
  for (unsigned long v = 0; v < box.vertex_count() && v < 4096; ++v) grid.push_back(box.vertex(v));
  for (unsigned long idx = 1; idx <= 4096; ++idx) {
    Vector v(d);
    for (int j = 0; j < d; ++j) v[j] = box.radius * (2.0 * halton(idx, nth_prime(j)) - 1.0);
    grid.push_back(v);
  }
  return grid;
}

/// Nearby and far-apart theta pairs for empirical slope estimates.
inline std::vector<std::pair<Vector, Vector>> theta_pairs(const ParameterBox& box, int samples) {
  std::vector<std::pair<Vector, Vector>> pairs;
  const int d = box.dim;
  if (d == 1) {
    for (int k = 0; k + 1 < samples; ++k) {
      Vector a(1), b(1);
      a[0] = -box.radius + 2.0 * box.radius * k / (samples - 1);
      b[0] = -box.radius + 2.0 * box.radius * (k + 1) / (samples - 1);
      pairs.emplace_back(a, b);
    }
    return pairs;
  }
  for (unsigned long idx = 1; idx <= static_cast<unsigned long>(samples) * 4; ++idx) {
    Vector a(d), b(d);
    for (int j = 0; j < d; ++j) {
      a[j] = box.radius * (2.0 * halton(idx, nth_prime(j)) - 1.0);
      b[j] = box.radius * (2.0 * halton(idx, nth_prime(j + d)) - 1.0);
    }
    pairs.emplace_back(a, b);
    // A short step from a towards b probes the local slope.
    pairs.emplace_back(a, a + 1e-3 * (b - a));
  }
  return pairs;
}

/// Maps a point of the unit cube [0,1]^(n-1) onto the probability simplex in R^n.
inline Vector cube_to_simplex(const Vector& u) {
  const Eigen::Index n = u.size() + 1;
  Vector mu(n);
  // Stick breaking with Beta(1, n-1-k) quantiles gives a uniform law on the simplex.
  double remaining = 1.0;
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const double share = 1.0 - std::pow(1.0 - u[k], 1.0 / static_cast<double>(n - 1 - k));
    mu[k] = remaining * share;
    remaining -= mu[k];
  }
  mu[n - 1] = std::max(0.0, remaining);
  return mu;
}

}  // namespace acflow
