#include "mpd/belief.hpp"

#include <fmt/format.h>

namespace mpd {

namespace {

double default_jitter(const Matrix& cov) {
  const double scale = cov.rows() > 0 ? cov.diagonal().cwiseAbs().mean() : 1.0;
  return 1e-12 * (scale > 0.0 ? scale : 1.0);
}

}  // namespace

GradientBelief::GradientBelief(Vector mean, Matrix cov, double jitter)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size()) {
    throw ShapeError(fmt::format("gradient belief: mean has length {} but covariance is {}x{}",
                                 mean_.size(), cov_.rows(), cov_.cols()));
  }
  if (!mean_.allFinite() || !cov_.allFinite()) {
    throw NumericalError("gradient belief: non-finite mean or covariance");
  }
  symmetrize(cov_);
  chol_ = jittered_cholesky(cov_, jitter, kMaxJitterDoublings, "gradient covariance");
  cov_.diagonal().array() += chol_.jitter;
}

GradientBelief::GradientBelief(Vector mean, Matrix cov)
    : GradientBelief(std::move(mean), cov, default_jitter(cov)) {}

}  // namespace mpd
