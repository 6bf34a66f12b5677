#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

#include "mpd/belief.hpp"
#include "mpd/kernel.hpp"

namespace mpd {

/// Prior over one positive hyperparameter, on its raw (not log) value.
struct HyperPrior {
  enum class Kind { kNormal, kUniform, kFixed };

  Kind kind = Kind::kUniform;
  double a = 0.0;  // Normal: mean, Uniform: lo, Fixed: value
  double b = 0.0;  // Normal: sd,   Uniform: hi

  static HyperPrior normal(double mean, double sd) { return {Kind::kNormal, mean, sd}; }
  static HyperPrior uniform(double lo, double hi) { return {Kind::kUniform, lo, hi}; }
  static HyperPrior fixed(double value) { return {Kind::kFixed, value, 0.0}; }

  bool is_fixed() const { return kind == Kind::kFixed; }

  /// `allow_zero` permits Fixed(0), used for the noise variance.
  void validate(const char* name, bool allow_zero = false) const;

  /// Log density up to a constant and its derivative with respect to log(value).
  double log_density(double value, double* d_log_value) const;

  /// Search interval on the raw value used by the MAP optimizer.
  std::pair<double, double> search_interval(double floor) const;
};

/// Priors for the ARD kernel; the lengthscale prior applies to every dimension.
struct HyperPriors {
  HyperPrior lengthscale = HyperPrior::uniform(0.01, 20.0);
  HyperPrior outputscale = HyperPrior::uniform(0.05, 20.0);
  HyperPrior noise_var = HyperPrior::uniform(1e-6, 1.0);

  void validate() const;

  /// Every parameter held at a known value.
  static HyperPriors all_fixed(const KernelParams& params);
};

/// Observations with a sliding window: only the `capacity` most recent
/// points are kept (FIFO eviction).
class Dataset {
 public:
  Dataset(Eigen::Index dim, std::size_t capacity);

  void append(const Vector& x, double y);

  Eigen::Index dim() const { return dim_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return static_cast<std::size_t>(y_.size()); }
  bool empty() const { return y_.size() == 0; }

  /// n x d, oldest row first.
  const Matrix& X() const { return x_; }
  const Vector& y() const { return y_; }

 private:
  Eigen::Index dim_;
  std::size_t capacity_;
  Matrix x_;
  Vector y_;
};

/// Immutable GP posterior snapshot with a constant prior mean equal to the
/// mean of the windowed observations.
class GpPosterior {
 public:
  /// Conditions the kernel on the dataset. An empty dataset yields the prior.
  GpPosterior(const Dataset& data, KernelParams params);

  Eigen::Index dim() const { return params_.dim(); }
  std::size_t size() const { return static_cast<std::size_t>(y_.size()); }
  const Matrix& X() const { return x_; }
  const Vector& y() const { return y_; }
  const KernelParams& params() const { return params_; }
  double prior_mean() const { return prior_mean_; }

  /// Factor of K(X,X) + noise_var*I + jitter*I.
  const JitteredCholesky& gram_factor() const { return chol_; }
  /// (K + noise_var*I)^{-1} (y - prior_mean)
  const Vector& weights() const { return weights_; }
  double jitter() const { return chol_.jitter; }

 private:
  Matrix x_;
  Vector y_;
  KernelParams params_;
  double prior_mean_ = 0.0;
  JitteredCholesky chol_;
  Vector weights_;
};

struct FitOptions {
  int restarts = 4;
  int max_iterations = 100;
  std::uint64_t seed = 0;
};

/// Log marginal likelihood of (X, y) under `params` with constant mean
/// `prior_mean`. If `grad` is non-null it receives the gradient with respect
/// to [log lengthscales..., log outputscale, log noise_var].
double log_marginal_likelihood(const Matrix& X, const Vector& y, double prior_mean,
                               const KernelParams& params, Vector* grad = nullptr);

/// Fits hyperparameters by MAP (when `refit`) and returns the posterior.
///
/// Fixed priors override `init` whether or not `refit` is set. MAP runs one
/// projected-gradient ascent in log space from `init` and `options.restarts`
/// more from random points of the prior search box.
GpPosterior fit_gp(const Dataset& data, const HyperPriors& priors, const KernelParams& init,
                   bool refit, const FitOptions& options = {});

/// Joint posterior N(mu_x, Sigma_x) of the gradient at `x`.
GradientBelief gradient_posterior(const GpPosterior& gp, const Vector& x);

struct MeanVar {
  double mean;
  double var;
};

/// Predictive mean and variance of the latent function at `x`.
MeanVar posterior_mean_var(const GpPosterior& gp, const Vector& x);

}  // namespace mpd
