#pragma once

#include "mpd/linalg.hpp"

namespace mpd {

/// Multivariate normal belief N(mean, cov) over the gradient at one location.
///
/// The covariance is symmetrized on construction and a diagonal jitter is
/// added before factoring; `cov()` returns the jittered matrix that every
/// downstream computation uses, so probabilities and directions derived from
/// one belief are mutually consistent.
class GradientBelief {
 public:
  /// Throws NumericalError if `cov + jitter*I` is not positive definite
  /// (after the standard jitter escalation).
  GradientBelief(Vector mean, Matrix cov, double jitter);

  /// Uses a jitter of 1e-12 times the mean diagonal magnitude.
  GradientBelief(Vector mean, Matrix cov);

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  const JitteredCholesky& factor() const { return chol_; }
  Eigen::Index dim() const { return mean_.size(); }
  double jitter() const { return chol_.jitter; }

  /// mean^T cov^{-1} mean, via the stored factor.
  double mahalanobis_sq() const { return chol_.half_solve(mean_).squaredNorm(); }

 private:
  Vector mean_;
  Matrix cov_;
  JitteredCholesky chol_;
};

}  // namespace mpd
