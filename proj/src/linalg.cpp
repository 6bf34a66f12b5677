#include "mpd/linalg.hpp"

#include <fmt/format.h>

namespace mpd {

double JitteredCholesky::log_det() const {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

JitteredCholesky jittered_cholesky(const Matrix& a, double jitter, int max_doublings,
                                   const char* what) {
  if (a.rows() != a.cols()) {
    throw ShapeError(fmt::format("{}: cannot factor a {}x{} matrix", what, a.rows(), a.cols()));
  }
  JitteredCholesky out;
  double current = jitter;
  for (int attempt = 0; attempt <= max_doublings; ++attempt) {
    Matrix shifted = a;
    shifted.diagonal().array() += current;
    out.llt.compute(shifted);
    if (out.llt.info() == Eigen::Success &&
        (out.llt.matrixLLT().diagonal().array() > 0.0).all()) {
      out.jitter = current;
      return out;
    }
    current *= 2.0;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  throw NumericalError(fmt::format(
      "{}: Cholesky failed after {} jitter doublings (final jitter {:.3e}); size {}, "
      "eigenvalue range [{:.3e}, {:.3e}], diagonal range [{:.3e}, {:.3e}]",
      what, max_doublings, current / 2.0, a.rows(), ev.size() ? ev.minCoeff() : 0.0,
      ev.size() ? ev.maxCoeff() : 0.0, a.diagonal().minCoeff(), a.diagonal().maxCoeff()));
}

bool cholesky_rank1_downdate(Matrix& l, Vector v) {
  const Eigen::Index n = l.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lkk = l(k, k);
    const double r2 = lkk * lkk - v(k) * v(k);
    if (!(r2 > 0.0)) return false;
    const double r = std::sqrt(r2);
    const double c = r / lkk;
    const double s = v(k) / lkk;
    l(k, k) = r;
    if (k + 1 < n) {
      const Eigen::Index rest = n - k - 1;
      l.col(k).tail(rest) = (l.col(k).tail(rest) - s * v.tail(rest)) / c;
      v.tail(rest) = c * v.tail(rest) - s * l.col(k).tail(rest);
    }
  }
  return true;
}

}  // namespace mpd
