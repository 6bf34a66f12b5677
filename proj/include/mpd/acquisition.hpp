#pragma once

#include <cstdint>
#include <random>

#include "mpd/belief.hpp"
#include "mpd/common.hpp"
#include "mpd/gp.hpp"

namespace mpd {

/// q candidate query locations, one per row (q x d).
struct Batch {
  Matrix points;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
};

/// Gradient belief at x after (hypothetically) observing a batch Z.
struct FantasyGradient {
  /// Sigma_{x|Z} = Sigma_x - A A^T; does not depend on the fantasy values.
  Matrix sigma_cond;
  /// A = Sigma_{xZ} L^{-T} with L L^T = Sigma_Z (d x q).
  Matrix cross_half;
};

/// Look-ahead quantities for one GP snapshot and one location x.
///
/// Caches the gradient belief at x and the training-data solves shared by
/// every candidate batch, so acquisition optimizers can evaluate many
/// batches cheaply. Gradients with respect to Z are analytic.
class LookAhead {
 public:
  LookAhead(const GpPosterior& gp, const Vector& x);

  const GradientBelief& belief() const { return belief_; }
  const Vector& location() const { return x_; }

  FantasyGradient fantasy(const Batch& z) const;

  /// mu^T Sigma_{x|Z}^{-1} mu + tr(A^T Sigma_{x|Z}^{-1} A), to be maximized.
  /// If `grad` is non-null it receives d(alpha)/dZ (q x d).
  double mpd_value(const Batch& z, Matrix* grad = nullptr) const;

  /// tr(Sigma_{x|Z}), to be minimized. Optional gradient as above.
  double trace_value(const Batch& z, Matrix* grad = nullptr) const;

 private:
  enum class Kind { kMpd, kTrace };

  struct BatchTerms {
    Matrix k_xz;  // K(X, Z), n x q
    Matrix u;     // (K + s^2 I)^{-1} K(X, Z), n x q
    JitteredCholesky s_chol;  // Sigma_Z
    Matrix cross;  // Sigma_{xZ}, d x q
    Matrix a;      // d x q
    Matrix cond;   // Sigma_{x|Z}
  };

  BatchTerms batch_terms(const Batch& z) const;
  double evaluate(const Batch& z, Kind kind, Matrix* grad) const;

  const GpPosterior& gp_;
  Vector x_;
  GradientBelief belief_;
  Matrix kinv_grad_t_;  // (K + s^2 I)^{-1} dK(x, X)^T, n x d
};

FantasyGradient fantasy_gradient(const GpPosterior& gp, const Vector& x, const Batch& z);

double mpd_acquisition(const GpPosterior& gp, const Vector& x, const Batch& z);

double trace_acquisition(const GpPosterior& gp, const Vector& x, const Batch& z);

/// Factor of Sigma_{x|Z} obtained by rank-one downdates of the factor of
/// Sigma_x, one per column of `cross_half`. Throws NumericalError when a
/// downdate loses positive definiteness.
Matrix sigma_cond_factor_lowrank(const GradientBelief& belief, const Matrix& cross_half);

enum class AcquisitionKind { kMpd, kTrace };

struct AcqOptConfig {
  int batch_size = 1;  // q
  int restarts = 8;    // R
  int max_iterations = 50;
  /// Candidates are searched in the domain box intersected with x +- scale * lengthscales.
  double region_scale = 1.0;
  Box bounds;

  void validate() const;
};

struct AcqOptResult {
  Batch batch;
  /// Acquisition value in its natural sense (alpha for kMpd, trace for kTrace).
  double value = 0.0;
  int failed_restarts = 0;
  /// Every restart failed numerically and a random candidate was used.
  bool fallback = false;
};

/// Search region: the domain box intersected with x +- scale * lengthscales.
Box acquisition_region(const GpPosterior& gp, const Vector& x, const AcqOptConfig& cfg);

/// Multi-start projected-gradient optimization of the acquisition.
///
/// Each restart draws its initial batch uniformly from the search region,
/// row by row and coordinate by coordinate, from `rng`.
AcqOptResult optimize_acquisition(const GpPosterior& gp, const Vector& x, AcquisitionKind kind,
                                  const AcqOptConfig& cfg, std::mt19937_64& rng);

}  // namespace mpd
