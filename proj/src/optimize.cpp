#include "mpd/optimize.hpp"

#include <algorithm>
#include <limits>

namespace mpd {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kMinStep = 1e-12;
constexpr double kLambdaMin = 1e-12;
constexpr double kLambdaMax = 1e12;

double safe_eval(const ValueAndGradient& f, const Vector& x, Vector& grad) {
  try {
    const double v = f(x, grad);
    return std::isfinite(v) && grad.allFinite() ? v : std::numeric_limits<double>::infinity();
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

BoxMinimizeResult box_minimize(const ValueAndGradient& f, const Vector& x0, const Vector& lower,
                               const Vector& upper, const BoxMinimizeOptions& options) {
  auto project = [&](const Vector& v) -> Vector { return v.cwiseMax(lower).cwiseMin(upper); };

  BoxMinimizeResult res;
  res.x = project(x0);
  Vector grad(res.x.size());
  res.value = f(res.x, grad);
  if (options.max_iterations <= 0) return res;

  const double pg0 = (project(res.x - grad) - res.x).lpNorm<Eigen::Infinity>();
  double lambda = pg0 > 0.0 ? std::clamp(1.0 / pg0, kLambdaMin, kLambdaMax) : 1.0;

  Vector trial_grad(res.x.size());
  for (int it = 0; it < options.max_iterations; ++it) {
    const double pg = (project(res.x - grad) - res.x).lpNorm<Eigen::Infinity>();
    if (pg < options.projected_grad_tol) {
      res.converged = true;
      break;
    }
    const Vector dir = project(res.x - lambda * grad) - res.x;
    const double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      res.converged = true;
      break;
    }

    double step = 1.0;
    Vector trial;
    double trial_value = std::numeric_limits<double>::infinity();
    while (step >= kMinStep) {
      trial = res.x + step * dir;
      trial_value = safe_eval(f, trial, trial_grad);
      if (trial_value <= res.value + kArmijo * step * slope) break;
      step *= 0.5;
    }
    if (step < kMinStep) break;

    const Vector s = trial - res.x;
    const Vector y = trial_grad - grad;
    const double sy = s.dot(y);
    lambda = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, kLambdaMin, kLambdaMax) : kLambdaMax;

    const double decrease = res.value - trial_value;
    res.x = trial;
    res.value = trial_value;
    grad = trial_grad;
    res.iterations = it + 1;
    if (decrease <= options.rel_f_tol * (1.0 + std::abs(res.value))) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace mpd
