#include "mpd/descent.hpp"

#include <fmt/format.h>

#include "mpd/gp.hpp"

namespace mpd {

double descent_probability(const GradientBelief& belief, const Vector& v) {
  require_dim(v.size(), belief.dim(), "descent_probability direction");
  if (!(v.norm() > 0.0)) throw std::invalid_argument("descent_probability: zero direction");
  const double var = v.dot(belief.cov() * v);
  if (!(var > 0.0)) {
    throw NumericalError(fmt::format("descent_probability: v^T Sigma v = {:.3e}", var));
  }
  return normal_cdf(-v.dot(belief.mean()) / std::sqrt(var));
}

Vector most_probable_direction(const GradientBelief& belief) {
  if (belief.mean().isZero(0.0)) {
    throw DegenerateBeliefError("most_probable_direction: zero expected gradient");
  }
  Vector v = -belief.factor().solve(belief.mean());
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw NumericalError("most_probable_direction: solve produced a degenerate direction");
  }
  return v / norm;
}

double max_descent_probability(const GradientBelief& belief) {
  const double q = belief.mahalanobis_sq();
  if (!(q >= 0.0)) throw NumericalError("max_descent_probability: negative quadratic form");
  return normal_cdf(std::sqrt(q));
}

void MoveConfig::validate() const {
  if (!(step > 0.0)) throw ConfigError(fmt::format("move step delta = {} must be > 0", step));
  if (!(threshold >= 0.5 && threshold < 1.0)) {
    throw ConfigError(fmt::format("p* = {} must lie in [0.5, 1)", threshold));
  }
  if (max_inner_steps < 1) throw ConfigError("max_inner_steps must be positive");
  bounds.validate();
}

MoveResult move_loop(const GpPosterior& gp, const Vector& x0, const MoveConfig& cfg) {
  require_dim(x0.size(), gp.dim(), "move_loop x0");
  cfg.validate();
  require_dim(cfg.bounds.dim(), gp.dim(), "move_loop bounds");
  MoveResult res;
  res.x = x0;
  bool first = true;
  for (;;) {
    const GradientBelief belief = gradient_posterior(gp, res.x);
    const bool degenerate = belief.mean().isZero(0.0);
    const double prob = degenerate ? 0.5 : max_descent_probability(belief);
    res.final_probability = prob;
    if (first) {
      res.initial_probability = prob;
      first = false;
    }
    if (degenerate || prob <= cfg.threshold || res.inner_steps >= cfg.max_inner_steps) break;
    res.x = cfg.bounds.clip(res.x + cfg.step * most_probable_direction(belief));
    ++res.inner_steps;
  }
  return res;
}

}  // namespace mpd
