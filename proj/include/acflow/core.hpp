#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace acflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Failure categories. The CLI maps these onto exit codes.
enum class ErrorKind {
  InvalidInput,
  ModelValidation,
  NonUniqueStationaryLaw,
  MixingViolation,
  MinorizationFailure,
  Stiffness,
  Divergence,
  IntegrationDrift,
  NamingScheme,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::ModelValidation: return "model validation";
    case ErrorKind::NonUniqueStationaryLaw: return "non-unique stationary law";
    case ErrorKind::MixingViolation: return "mixing violation";
    case ErrorKind::MinorizationFailure: return "minorization failure";
    case ErrorKind::Stiffness: return "stiffness";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::IntegrationDrift: return "integration drift";
    case ErrorKind::NamingScheme: return "naming scheme";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures raised while time-stepping or solving numerically.
  bool is_numeric() const noexcept {
    return kind_ == ErrorKind::Stiffness || kind_ == ErrorKind::Divergence ||
           kind_ == ErrorKind::IntegrationDrift;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::InvalidInput, what);
}

/// The actor parameter box [-radius, radius]^dim.
struct ParameterBox {
  int dim = 1;
  double radius = 1.0;

  bool contains(const Vector& theta, double tol = 1e-9) const {
    return theta.size() == dim &&
           (theta.array().abs() <= radius + tol).all();
  }

  Vector clip(const Vector& theta) const {
    return theta.cwiseMax(-radius).cwiseMin(radius);
  }

  /// Vertex number `index` (bit j selects the sign of coordinate j).
  Vector vertex(unsigned long index) const {
    Vector v(dim);
    for (int j = 0; j < dim; ++j) v[j] = ((index >> j) & 1UL) ? radius : -radius;
    return v;
  }

  unsigned long vertex_count() const { return 1UL << dim; }
};

inline double l1_norm(const Vector& v) { return v.lpNorm<1>(); }

}  // namespace acflow
