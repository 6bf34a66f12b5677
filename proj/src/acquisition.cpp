#include "mpd/acquisition.hpp"

#include <limits>

#include <fmt/format.h>

#include "mpd/optimize.hpp"

namespace mpd {

LookAhead::LookAhead(const GpPosterior& gp, const Vector& x)
    : gp_(gp), x_(x), belief_(gradient_posterior(gp, x)) {
  if (gp.size() > 0) {
    const Matrix g = kernel_grad_x1(x, gp.X(), gp.params());
    kinv_grad_t_ = gp.gram_factor().solve(Matrix(g.transpose()));
  } else {
    kinv_grad_t_ = Matrix::Zero(0, gp.dim());
  }
}

FantasyGradient LookAhead::fantasy(const Batch& z) const {
  const BatchTerms t = batch_terms(z);
  return {t.cond, t.a};
}

LookAhead::BatchTerms LookAhead::batch_terms(const Batch& z) const {
  const Eigen::Index q = z.size();
  require_dim(z.dim(), gp_.dim(), "acquisition batch columns");
  if (q < 1) throw ShapeError("acquisition: empty batch");
  const KernelParams& p = gp_.params();

  BatchTerms t;
  if (gp_.size() > 0) {
    t.k_xz = kernel_eval(gp_.X(), z.points, p);
    t.u = gp_.gram_factor().solve(t.k_xz);
  } else {
    t.k_xz = Matrix(0, q);
    t.u = Matrix(0, q);
  }
  // noisy observations at Z, conditioned on the training data
  Matrix s = kernel_eval(z.points, z.points, p);
  s.noalias() -= t.k_xz.transpose() * t.u;
  symmetrize(s);
  s.diagonal().array() += p.noise_var;
  t.s_chol =
      jittered_cholesky(s, p.base_jitter(), kMaxJitterDoublings, "fantasy observation covariance");

  t.cross = kernel_grad_x1(x_, z.points, p);
  t.cross.noalias() -= kinv_grad_t_.transpose() * t.k_xz;
  t.a = t.s_chol.half_solve(Matrix(t.cross.transpose())).transpose();

  t.cond = belief_.cov();
  t.cond.noalias() -= t.a * t.a.transpose();
  symmetrize(t.cond);
  return t;
}

double LookAhead::mpd_value(const Batch& z, Matrix* grad) const {
  return evaluate(z, Kind::kMpd, grad);
}

double LookAhead::trace_value(const Batch& z, Matrix* grad) const {
  return evaluate(z, Kind::kTrace, grad);
}

double LookAhead::evaluate(const Batch& z, Kind kind, Matrix* grad) const {
  const Eigen::Index d = gp_.dim();
  const Eigen::Index q = z.size();
  const BatchTerms t = batch_terms(z);
  const KernelParams& p = gp_.params();
  const Matrix& a = t.a;
  const Matrix& cond = t.cond;
  const Matrix& cross = t.cross;
  const Matrix& u = t.u;
  const JitteredCholesky& s_chol = t.s_chol;

  double value = 0.0;
  Matrix gamma;  // d(value) = tr(gamma dP), P = A A^T
  if (kind == Kind::kTrace) {
    value = cond.trace();
    if (grad) gamma = -Matrix::Identity(d, d);
  } else {
    const double scale = cond.diagonal().cwiseAbs().mean();
    const JitteredCholesky c_chol = jittered_cholesky(
        cond, 1e-12 * (scale > 0.0 ? scale : 1.0), kMaxJitterDoublings, "conditioned gradient covariance");
    const Vector& mu = belief_.mean();
    const Matrix m = c_chol.half_solve(a);
    value = c_chol.half_solve(mu).squaredNorm() + m.squaredNorm();
    if (grad) {
      Matrix c_eff = cond;
      c_eff.diagonal().array() += c_chol.jitter;
      const Matrix c_inv = c_chol.solve(Matrix(Matrix::Identity(d, d)));
      Matrix inner = mu * mu.transpose();
      inner += c_eff;
      inner.noalias() += a * a.transpose();
      gamma = c_inv * inner * c_inv;
      symmetrize(gamma);
    }
  }
  if (!grad) return value;

  // P = B S^{-1} B^T with B = Sigma_{xZ}, S = Sigma_Z
  const Matrix s_inv_bt = s_chol.solve(Matrix(cross.transpose()));  // q x d
  const Matrix e = gamma * s_inv_bt.transpose();                     // d x q
  const Matrix f = s_inv_bt * gamma * s_inv_bt.transpose();          // q x q

  grad->resize(q, d);
  for (Eigen::Index j = 0; j < q; ++j) {
    const Vector zj = z.points.row(j).transpose();
    const Vector ej = e.col(j);
    Vector g = kernel_hess_cross(x_, zj, p).transpose() * ej;
    const Matrix dk_zz = kernel_grad_x1(zj, z.points, p);  // d x q
    for (Eigen::Index i = 0; i < q; ++i) {
      if (i != j) g -= f(i, j) * dk_zz.col(i);
    }
    if (gp_.size() > 0) {
      const Matrix dk_zx = kernel_grad_x1(zj, gp_.X(), p);  // d x n
      const Vector w = u * f.col(j) - kinv_grad_t_ * ej;
      g += dk_zx * w;
    }
    grad->row(j) = 2.0 * g.transpose();
  }
  return value;
}

FantasyGradient fantasy_gradient(const GpPosterior& gp, const Vector& x, const Batch& z) {
  return LookAhead(gp, x).fantasy(z);
}

double mpd_acquisition(const GpPosterior& gp, const Vector& x, const Batch& z) {
  return LookAhead(gp, x).mpd_value(z);
}

double trace_acquisition(const GpPosterior& gp, const Vector& x, const Batch& z) {
  return LookAhead(gp, x).trace_value(z);
}

Matrix sigma_cond_factor_lowrank(const GradientBelief& belief, const Matrix& cross_half) {
  require_dim(cross_half.rows(), belief.dim(), "sigma_cond_factor_lowrank rows");
  Matrix l = belief.factor().lower_factor().triangularView<Eigen::Lower>();
  for (Eigen::Index c = 0; c < cross_half.cols(); ++c) {
    if (!cholesky_rank1_downdate(l, cross_half.col(c))) {
      throw NumericalError(
          fmt::format("low-rank downdate lost positive definiteness at column {}", c));
    }
  }
  return l;
}

// ---------------------------------------------------------------------------
// Optimization

void AcqOptConfig::validate() const {
  if (batch_size < 1) throw ConfigError("acquisition batch size q must be >= 1");
  if (restarts < 1) throw ConfigError("acquisition restarts must be >= 1");
  if (max_iterations < 0) throw ConfigError("acquisition iterations must be >= 0");
  if (!(region_scale > 0.0)) throw ConfigError("acquisition region scale must be > 0");
  bounds.validate();
}

Box acquisition_region(const GpPosterior& gp, const Vector& x, const AcqOptConfig& cfg) {
  const Vector half = cfg.region_scale * gp.params().lengthscales;
  Box region{(x - half).cwiseMax(cfg.bounds.lower), (x + half).cwiseMin(cfg.bounds.upper)};
  // x outside the box (should not happen) would leave an empty region
  for (Eigen::Index k = 0; k < region.dim(); ++k) {
    if (!(region.lower(k) < region.upper(k))) {
      region.lower(k) = cfg.bounds.lower(k);
      region.upper(k) = cfg.bounds.upper(k);
    }
  }
  return region;
}

namespace {

Vector flatten(const Matrix& z) {
  Vector v(z.size());
  for (Eigen::Index i = 0; i < z.rows(); ++i) v.segment(i * z.cols(), z.cols()) = z.row(i).transpose();
  return v;
}

Matrix unflatten(const Vector& v, Eigen::Index q, Eigen::Index d) {
  Matrix z(q, d);
  for (Eigen::Index i = 0; i < q; ++i) z.row(i) = v.segment(i * d, d).transpose();
  return z;
}

Matrix random_batch(const Box& region, Eigen::Index q, std::mt19937_64& rng) {
  Matrix z(q, region.dim());
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index k = 0; k < region.dim(); ++k) {
      std::uniform_real_distribution<double> unif(region.lower(k), region.upper(k));
      z(i, k) = unif(rng);
    }
  }
  return z;
}

}  // namespace

AcqOptResult optimize_acquisition(const GpPosterior& gp, const Vector& x, AcquisitionKind kind,
                                  const AcqOptConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  require_dim(cfg.bounds.dim(), gp.dim(), "acquisition bounds");
  const Eigen::Index q = cfg.batch_size;
  const Eigen::Index d = gp.dim();
  const LookAhead look(gp, x);
  const Box region = acquisition_region(gp, x, cfg);

  // minimized objective: -alpha for MPD, trace for the trace rule
  const double sign = kind == AcquisitionKind::kMpd ? -1.0 : 1.0;
  const ValueAndGradient objective = [&](const Vector& v, Vector& g) {
    Matrix gz;
    const Batch b{unflatten(v, q, d)};
    const double val = kind == AcquisitionKind::kMpd ? look.mpd_value(b, &gz) : look.trace_value(b, &gz);
    g = sign * flatten(gz);
    return sign * val;
  };

  Vector lo(q * d), hi(q * d);
  for (Eigen::Index i = 0; i < q; ++i) {
    lo.segment(i * d, d) = region.lower;
    hi.segment(i * d, d) = region.upper;
  }
  BoxMinimizeOptions bopts;
  bopts.max_iterations = cfg.max_iterations;

  AcqOptResult out;
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    const Matrix init = random_batch(region, q, rng);
    try {
      const BoxMinimizeResult res = box_minimize(objective, flatten(init), lo, hi, bopts);
      if (std::isfinite(res.value) && res.value < best) {
        best = res.value;
        out.batch.points = unflatten(res.x, q, d);
      }
    } catch (const NumericalError&) {
      ++out.failed_restarts;
    }
  }

  if (!std::isfinite(best)) {
    out.fallback = true;
    for (int c = 0; c < 16; ++c) {
      const Batch cand{random_batch(region, q, rng)};
      try {
        const double v = sign * (kind == AcquisitionKind::kMpd ? look.mpd_value(cand)
                                                               : look.trace_value(cand));
        if (v < best) {
          best = v;
          out.batch = cand;
        }
      } catch (const NumericalError&) {
      }
    }
    if (!std::isfinite(best)) {
      out.batch.points = random_batch(region, q, rng);
      out.value = std::numeric_limits<double>::quiet_NaN();
      return out;
    }
  }
  for (Eigen::Index i = 0; i < q; ++i) {
    out.batch.points.row(i) = cfg.bounds.clip(out.batch.points.row(i).transpose()).transpose();
  }
  out.value = sign * best;
  return out;
}

}  // namespace mpd
