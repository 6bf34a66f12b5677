#pragma once

#include "mpd/common.hpp"

namespace mpd {

/// ARD squared-exponential kernel hyperparameters
///
///   k(x, x') = outputscale * exp(-1/2 sum_k (x_k - x'_k)^2 / lengthscale_k^2)
///
/// `noise_var` is the observation noise variance; it never enters the kernel
/// itself, only the Gram matrix of noisy observations.
struct KernelParams {
  Vector lengthscales;
  double outputscale = 1.0;
  double noise_var = 0.0;

  static KernelParams isotropic(Eigen::Index d, double lengthscale, double outputscale,
                                double noise_var) {
    return {Vector::Constant(d, lengthscale), outputscale, noise_var};
  }

  Eigen::Index dim() const { return lengthscales.size(); }

  /// Throws ConfigError if any positivity constraint is violated.
  void validate() const;

  /// Diagonal jitter used whenever a Gram matrix built from these params is factored.
  double base_jitter() const { return 1e-8 * outputscale; }
};

/// Gram matrix between the rows of `x1` (m x d) and `x2` (n x d).
Matrix kernel_eval(const Matrix& x1, const Matrix& x2, const KernelParams& params);

/// k(a, b) for two single points.
double kernel_eval(const Vector& a, const Vector& b, const KernelParams& params);

/// Derivative of k(x, X[j,:]) with respect to x, one column per row of X (d x n).
Matrix kernel_grad_x1(const Vector& x, const Matrix& xs, const KernelParams& params);

/// Mixed second derivative d^2 k(x, x2) / (dx_i dx2_j) (d x d).
Matrix kernel_hess_cross(const Vector& x, const Vector& x2, const KernelParams& params);

}  // namespace mpd
