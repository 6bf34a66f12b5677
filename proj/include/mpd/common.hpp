#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mpd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Inputs with inconsistent dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Factorization failures, non-PD covariances, negative quadratic forms.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gradient belief with zero mean: no descent direction exists.
class DegenerateBeliefError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid or inconsistent user configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Objective evaluation failed (protocol failure, timeout, child exit).
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Objective queried outside its domain box.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Axis-aligned domain box.
struct Box {
  Vector lower;
  Vector upper;

  static Box unit(Eigen::Index d) { return {Vector::Zero(d), Vector::Ones(d)}; }

  Eigen::Index dim() const { return lower.size(); }

  /// Throws ConfigError unless lower < upper componentwise.
  void validate() const;

  bool contains(const Vector& x) const;

  Vector clip(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

  Vector width() const { return upper - lower; }
};

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_pdf(double z) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

void require_dim(Eigen::Index got, Eigen::Index want, const char* what);

}  // namespace mpd
