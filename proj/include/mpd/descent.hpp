#pragma once

#include "mpd/belief.hpp"
#include "mpd/common.hpp"

namespace mpd {

class GpPosterior;

/// Probability that moving along `v` decreases the objective:
/// Phi(-v^T mu / sqrt(v^T Sigma v)). Invariant to positive rescaling of `v`.
///
/// Throws std::invalid_argument for a zero direction and NumericalError when
/// v^T Sigma v is not positive.
double descent_probability(const GradientBelief& belief, const Vector& v);

/// Unit vector along -Sigma^{-1} mu, the direction of maximum descent
/// probability. Throws DegenerateBeliefError when mu = 0.
Vector most_probable_direction(const GradientBelief& belief);

/// Phi(sqrt(mu^T Sigma^{-1} mu)); 0.5 when mu = 0.
double max_descent_probability(const GradientBelief& belief);

struct MoveConfig {
  double step = 1e-3;       // delta
  double threshold = 0.65;  // p*
  int max_inner_steps = 1000;
  Box bounds;

  void validate() const;
};

struct MoveResult {
  Vector x;
  int inner_steps = 0;
  /// Max descent probability at the final location (0.5 for a degenerate belief).
  double final_probability = 0.5;
  /// Max descent probability at the starting location.
  double initial_probability = 0.5;
};

/// Repeated fixed-length steps along the most probable descent direction
/// while the maximum descent probability exceeds the threshold. The GP is
/// held fixed and the objective is never evaluated.
MoveResult move_loop(const GpPosterior& gp, const Vector& x0, const MoveConfig& cfg);

}  // namespace mpd
