#pragma once

#include <functional>

#include "mpd/common.hpp"

namespace mpd {

/// Objective for box-constrained minimization: returns f(x) and writes grad.
using ValueAndGradient = std::function<double(const Vector& x, Vector& grad)>;

struct BoxMinimizeOptions {
  int max_iterations = 100;
  /// Stop when the projected-gradient step has infinity norm below this.
  double projected_grad_tol = 1e-9;
  /// Stop when the relative decrease of f falls below this.
  double rel_f_tol = 1e-12;
};

struct BoxMinimizeResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Spectral projected gradient (Barzilai-Borwein step, Armijo backtracking
/// along the projection arc) on the box [lower, upper].
///
/// A NumericalError thrown by `f` during a line-search trial counts as a
/// rejected step. Errors at the starting point propagate.
BoxMinimizeResult box_minimize(const ValueAndGradient& f, const Vector& x0, const Vector& lower,
                               const Vector& upper, const BoxMinimizeOptions& options = {});

}  // namespace mpd
