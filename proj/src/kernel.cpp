#include "mpd/kernel.hpp"

#include <fmt/format.h>

namespace mpd {

void KernelParams::validate() const {
  if (lengthscales.size() == 0) throw ConfigError("kernel: lengthscales must be non-empty");
  for (Eigen::Index k = 0; k < lengthscales.size(); ++k) {
    if (!(lengthscales(k) > 0.0) || !std::isfinite(lengthscales(k))) {
      throw ConfigError(fmt::format("kernel: lengthscale[{}] = {} is not positive", k,
                                    lengthscales(k)));
    }
  }
  if (!(outputscale > 0.0) || !std::isfinite(outputscale)) {
    throw ConfigError(fmt::format("kernel: outputscale = {} is not positive", outputscale));
  }
  if (!(noise_var >= 0.0) || !std::isfinite(noise_var)) {
    throw ConfigError(fmt::format("kernel: noise_var = {} is negative", noise_var));
  }
}

Matrix kernel_eval(const Matrix& x1, const Matrix& x2, const KernelParams& params) {
  const Eigen::Index d = params.dim();
  require_dim(x1.cols(), d, "kernel_eval x1 columns");
  require_dim(x2.cols(), d, "kernel_eval x2 columns");
  const Eigen::RowVectorXd inv_ls = params.lengthscales.cwiseInverse().transpose();
  const Matrix a = x1.array().rowwise() * inv_ls.array();
  const Matrix b = x2.array().rowwise() * inv_ls.array();
  Matrix out(x1.rows(), x2.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double sq = (a.row(i) - b.row(j)).squaredNorm();
      out(i, j) = params.outputscale * std::exp(-0.5 * sq);
    }
  }
  return out;
}

double kernel_eval(const Vector& a, const Vector& b, const KernelParams& params) {
  require_dim(a.size(), params.dim(), "kernel_eval a");
  require_dim(b.size(), params.dim(), "kernel_eval b");
  const double sq = ((a - b).array() / params.lengthscales.array()).square().sum();
  return params.outputscale * std::exp(-0.5 * sq);
}

Matrix kernel_grad_x1(const Vector& x, const Matrix& xs, const KernelParams& params) {
  const Eigen::Index d = params.dim();
  require_dim(x.size(), d, "kernel_grad_x1 x");
  require_dim(xs.cols(), d, "kernel_grad_x1 X columns");
  const Vector inv_ls2 = params.lengthscales.array().square().inverse();
  Matrix out(d, xs.rows());
  for (Eigen::Index j = 0; j < xs.rows(); ++j) {
    const Vector diff = x - xs.row(j).transpose();
    const double k = params.outputscale * std::exp(-0.5 * diff.cwiseProduct(diff).dot(inv_ls2));
    out.col(j) = -k * diff.cwiseProduct(inv_ls2);
  }
  return out;
}

Matrix kernel_hess_cross(const Vector& x, const Vector& x2, const KernelParams& params) {
  const Eigen::Index d = params.dim();
  require_dim(x.size(), d, "kernel_hess_cross x");
  require_dim(x2.size(), d, "kernel_hess_cross x2");
  const Vector inv_ls2 = params.lengthscales.array().square().inverse();
  const Vector scaled = (x - x2).cwiseProduct(inv_ls2);
  const double k = kernel_eval(x, x2, params);
  Matrix out = -k * scaled * scaled.transpose();
  out.diagonal() += k * inv_ls2;
  return out;
}

}  // namespace mpd
