#include "mpd/gp.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <fmt/format.h>

#include "mpd/optimize.hpp"

namespace mpd {

// ---------------------------------------------------------------------------
// Priors

void HyperPrior::validate(const char* name, bool allow_zero) const {
  switch (kind) {
    case Kind::kNormal:
      if (!(b > 0.0)) throw ConfigError(fmt::format("{} prior: Normal sd must be > 0", name));
      if (!std::isfinite(a)) throw ConfigError(fmt::format("{} prior: Normal mean", name));
      break;
    case Kind::kUniform:
      if (!(a < b)) throw ConfigError(fmt::format("{} prior: Uniform requires lo < hi", name));
      if (!(a > 0.0)) throw ConfigError(fmt::format("{} prior: Uniform lo must be > 0", name));
      break;
    case Kind::kFixed:
      if (allow_zero ? !(a >= 0.0) : !(a > 0.0)) {
        throw ConfigError(fmt::format("{} prior: Fixed value {} violates positivity", name, a));
      }
      break;
  }
}

double HyperPrior::log_density(double value, double* d_log_value) const {
  if (kind == Kind::kNormal) {
    const double z = (value - a) / b;
    if (d_log_value) *d_log_value = -(value - a) / (b * b) * value;
    return -0.5 * z * z;
  }
  if (d_log_value) *d_log_value = 0.0;
  return 0.0;
}

std::pair<double, double> HyperPrior::search_interval(double floor) const {
  switch (kind) {
    case Kind::kNormal:
      return {std::max(floor, a - 6.0 * b), std::max(a + 6.0 * b, 2.0 * floor)};
    case Kind::kUniform:
      return {std::max(floor, a), std::max(b, 2.0 * floor)};
    case Kind::kFixed:
      break;
  }
  return {a, a};
}

void HyperPriors::validate() const {
  lengthscale.validate("lengthscale");
  outputscale.validate("outputscale");
  noise_var.validate("noise_var", true);
}

HyperPriors HyperPriors::all_fixed(const KernelParams& params) {
  HyperPriors p;
  p.lengthscale = HyperPrior::fixed(params.lengthscales(0));
  p.outputscale = HyperPrior::fixed(params.outputscale);
  p.noise_var = HyperPrior::fixed(params.noise_var);
  return p;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(Eigen::Index dim, std::size_t capacity)
    : dim_(dim), capacity_(capacity), x_(0, dim), y_(0) {
  if (dim <= 0) throw ConfigError("dataset dimension must be positive");
  if (capacity == 0) throw ConfigError("dataset capacity must be positive");
}

void Dataset::append(const Vector& x, double y) {
  require_dim(x.size(), dim_, "Dataset::append");
  const Eigen::Index n = y_.size();
  if (static_cast<std::size_t>(n) < capacity_) {
    x_.conservativeResize(n + 1, Eigen::NoChange);
    y_.conservativeResize(n + 1);
  } else {
    // shift the window by one, dropping the oldest point
    x_.topRows(n - 1) = x_.bottomRows(n - 1).eval();
    y_.head(n - 1) = y_.tail(n - 1).eval();
  }
  x_.row(x_.rows() - 1) = x.transpose();
  y_(y_.size() - 1) = y;
}

// ---------------------------------------------------------------------------
// Posterior

namespace {

Matrix noisy_gram(const Matrix& X, const KernelParams& params) {
  Matrix k = kernel_eval(X, X, params);
  k.diagonal().array() += params.noise_var;
  return k;
}

}  // namespace

GpPosterior::GpPosterior(const Dataset& data, KernelParams params)
    : x_(data.X()), y_(data.y()), params_(std::move(params)) {
  params_.validate();
  require_dim(params_.dim(), data.dim(), "GpPosterior kernel dimension");
  prior_mean_ = y_.size() > 0 ? y_.mean() : 0.0;
  if (y_.size() == 0) {
    chol_.llt.compute(Matrix(0, 0));
    chol_.jitter = params_.base_jitter();
    weights_ = Vector(0);
    return;
  }
  chol_ = jittered_cholesky(noisy_gram(x_, params_), params_.base_jitter(), kMaxJitterDoublings,
                            "GP Gram matrix");
  weights_ = chol_.solve(Vector(y_.array() - prior_mean_));
}

GradientBelief gradient_posterior(const GpPosterior& gp, const Vector& x) {
  const KernelParams& p = gp.params();
  require_dim(x.size(), p.dim(), "gradient_posterior x");
  Matrix cov = Matrix::Zero(p.dim(), p.dim());
  cov.diagonal() = p.outputscale * p.lengthscales.array().square().inverse();
  Vector mean = Vector::Zero(p.dim());
  if (gp.size() > 0) {
    const Matrix g = kernel_grad_x1(x, gp.X(), p);  // d x n
    mean = g * gp.weights();
    const Matrix v = gp.gram_factor().half_solve(Matrix(g.transpose()));  // n x d
    cov.noalias() -= v.transpose() * v;
  }
  return GradientBelief(std::move(mean), std::move(cov), p.base_jitter());
}

MeanVar posterior_mean_var(const GpPosterior& gp, const Vector& x) {
  const KernelParams& p = gp.params();
  require_dim(x.size(), p.dim(), "posterior_mean_var x");
  if (gp.size() == 0) return {gp.prior_mean(), p.outputscale};
  const Vector k = kernel_eval(gp.X(), Matrix(x.transpose()), p).col(0);
  const double mean = gp.prior_mean() + k.dot(gp.weights());
  const double var = p.outputscale - gp.gram_factor().half_solve(k).squaredNorm();
  return {mean, std::max(var, 0.0)};
}

// ---------------------------------------------------------------------------
// Marginal likelihood and MAP fitting

double log_marginal_likelihood(const Matrix& X, const Vector& y, double prior_mean,
                               const KernelParams& params, Vector* grad) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = params.dim();
  require_dim(X.cols(), d, "log_marginal_likelihood X columns");
  require_dim(y.size(), n, "log_marginal_likelihood y");

  const Matrix kf = kernel_eval(X, X, params);
  Matrix gram = kf;
  gram.diagonal().array() += params.noise_var;
  const JitteredCholesky chol =
      jittered_cholesky(gram, params.base_jitter(), kMaxJitterDoublings, "GP Gram matrix");
  const Vector resid = y.array() - prior_mean;
  const Vector alpha = chol.solve(resid);
  const double lml = -0.5 * resid.dot(alpha) - 0.5 * chol.log_det() -
                     0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!grad) return lml;

  // dL/dtheta = 1/2 tr(W dK/dtheta), W = alpha alpha^T - K^{-1}
  Matrix w = alpha * alpha.transpose();
  w -= chol.solve(Matrix(Matrix::Identity(n, n)));
  const Matrix wk = w.cwiseProduct(kf);

  grad->resize(d + 2);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double inv_l2 = 1.0 / (params.lengthscales(k) * params.lengthscales(k));
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double diff = X(i, k) - X(j, k);
        acc += wk(i, j) * diff * diff;
      }
    }
    (*grad)(k) = 0.5 * acc * inv_l2;
  }
  // the jitter is proportional to the outputscale, so it moves with it
  (*grad)(d) = 0.5 * (wk.sum() + chol.jitter * w.trace());
  (*grad)(d + 1) = 0.5 * params.noise_var * w.trace();
  return lml;
}

namespace {

constexpr double kLengthscaleFloor = 1e-4;
constexpr double kOutputscaleFloor = 1e-6;
constexpr double kNoiseFloor = 1e-10;

/// Maps between KernelParams and the free log-space variables of a MAP fit.
struct LogSpaceLayout {
  Eigen::Index d;
  bool ls_free, os_free, nv_free;
  Vector lower, upper;  // log-space box over the free variables

  LogSpaceLayout(Eigen::Index dim, const HyperPriors& priors)
      : d(dim),
        ls_free(!priors.lengthscale.is_fixed()),
        os_free(!priors.outputscale.is_fixed()),
        nv_free(!priors.noise_var.is_fixed()) {
    std::vector<std::pair<double, double>> bounds;
    if (ls_free) {
      const auto iv = priors.lengthscale.search_interval(kLengthscaleFloor);
      for (Eigen::Index k = 0; k < d; ++k) bounds.push_back(iv);
    }
    if (os_free) bounds.push_back(priors.outputscale.search_interval(kOutputscaleFloor));
    if (nv_free) bounds.push_back(priors.noise_var.search_interval(kNoiseFloor));
    lower.resize(static_cast<Eigen::Index>(bounds.size()));
    upper.resize(lower.size());
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      lower(static_cast<Eigen::Index>(i)) = std::log(bounds[i].first);
      upper(static_cast<Eigen::Index>(i)) = std::log(bounds[i].second);
    }
  }

  Eigen::Index size() const { return lower.size(); }

  Vector pack(const KernelParams& p) const {
    Vector theta(size());
    Eigen::Index i = 0;
    if (ls_free) {
      theta.segment(i, d) = p.lengthscales.array().log();
      i += d;
    }
    if (os_free) theta(i++) = std::log(p.outputscale);
    if (nv_free) theta(i++) = std::log(std::max(p.noise_var, kNoiseFloor));
    return theta;
  }

  KernelParams unpack(const Vector& theta, KernelParams base) const {
    Eigen::Index i = 0;
    if (ls_free) {
      base.lengthscales = theta.segment(i, d).array().exp();
      i += d;
    }
    if (os_free) base.outputscale = std::exp(theta(i++));
    if (nv_free) base.noise_var = std::exp(theta(i++));
    return base;
  }

  /// Restrict a full gradient [ls..., os, nv] to the free variables.
  Vector restrict(const Vector& full) const {
    Vector g(size());
    Eigen::Index i = 0;
    if (ls_free) {
      g.segment(i, d) = full.head(d);
      i += d;
    }
    if (os_free) g(i++) = full(d);
    if (nv_free) g(i++) = full(d + 1);
    return g;
  }
};

KernelParams apply_fixed(KernelParams p, const HyperPriors& priors) {
  if (priors.lengthscale.is_fixed()) p.lengthscales.setConstant(priors.lengthscale.a);
  if (priors.outputscale.is_fixed()) p.outputscale = priors.outputscale.a;
  if (priors.noise_var.is_fixed()) p.noise_var = priors.noise_var.a;
  return p;
}

double log_prior(const KernelParams& p, const HyperPriors& priors, Vector* grad) {
  const Eigen::Index d = p.dim();
  if (grad) grad->setZero(d + 2);
  double lp = 0.0;
  double g = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    lp += priors.lengthscale.log_density(p.lengthscales(k), &g);
    if (grad) (*grad)(k) = g;
  }
  lp += priors.outputscale.log_density(p.outputscale, &g);
  if (grad) (*grad)(d) = g;
  lp += priors.noise_var.log_density(p.noise_var, &g);
  if (grad) (*grad)(d + 1) = g;
  return lp;
}

}  // namespace

GpPosterior fit_gp(const Dataset& data, const HyperPriors& priors, const KernelParams& init,
                   bool refit, const FitOptions& options) {
  if (data.empty()) throw ConfigError("fit_gp: dataset is empty");
  priors.validate();
  require_dim(init.dim(), data.dim(), "fit_gp initial lengthscales");
  KernelParams start = apply_fixed(init, priors);
  start.validate();

  const LogSpaceLayout layout(data.dim(), priors);
  if (!refit || layout.size() == 0) return GpPosterior(data, std::move(start));

  const Matrix& X = data.X();
  const Vector& y = data.y();
  const double mu0 = y.mean();

  // minimize the negative log posterior in log space
  const ValueAndGradient objective = [&](const Vector& theta, Vector& grad) {
    const KernelParams p = layout.unpack(theta, start);
    Vector g_lml, g_prior;
    const double lml = log_marginal_likelihood(X, y, mu0, p, &g_lml);
    const double lp = log_prior(p, priors, &g_prior);
    grad = -layout.restrict(g_lml + g_prior);
    return -(lml + lp);
  };

  BoxMinimizeOptions bopts;
  bopts.max_iterations = options.max_iterations;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Vector best_theta = layout.pack(start).cwiseMax(layout.lower).cwiseMin(layout.upper);
  double best_value = std::numeric_limits<double>::infinity();
  for (int r = 0; r <= options.restarts; ++r) {
    Vector theta0 = layout.pack(start);
    if (r > 0) {
      for (Eigen::Index i = 0; i < theta0.size(); ++i) {
        theta0(i) = layout.lower(i) + unif(rng) * (layout.upper(i) - layout.lower(i));
      }
    }
    try {
      const BoxMinimizeResult res = box_minimize(objective, theta0, layout.lower, layout.upper, bopts);
      if (res.value < best_value) {
        best_value = res.value;
        best_theta = res.x;
      }
    } catch (const NumericalError&) {
      // a restart that cannot even be evaluated at its start is skipped
    }
  }
  if (!std::isfinite(best_value)) {
    throw NumericalError("fit_gp: every MAP restart failed to evaluate");
  }
  return GpPosterior(data, layout.unpack(best_theta, start));
}

}  // namespace mpd
