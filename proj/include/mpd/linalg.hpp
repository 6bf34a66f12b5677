#pragma once

#include <Eigen/Cholesky>

#include "mpd/common.hpp"

namespace mpd {

/// Cholesky factor of a symmetric matrix with diagonal jitter.
///
/// The factorization of `a + jitter * I` is attempted first; on failure the
/// jitter is doubled, up to `max_doublings` times. `jitter` records the value
/// that finally succeeded.
struct JitteredCholesky {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;

  const Matrix& lower_factor() const { return llt.matrixLLT(); }
  auto L() const { return llt.matrixL(); }

  Vector solve(const Vector& b) const { return llt.solve(b); }
  Matrix solve(const Matrix& b) const { return llt.solve(b); }

  /// L^{-1} b
  Matrix half_solve(const Matrix& b) const { return llt.matrixL().solve(b); }
  Vector half_solve(const Vector& b) const { return llt.matrixL().solve(b); }

  double log_det() const;
};

inline constexpr int kMaxJitterDoublings = 8;

/// Throws NumericalError with condition diagnostics when every attempt fails.
JitteredCholesky jittered_cholesky(const Matrix& a, double jitter,
                                   int max_doublings = kMaxJitterDoublings,
                                   const char* what = "matrix");

/// In-place rank-one downdate: given lower-triangular `l` with l*l^T = A,
/// overwrite it with the factor of A - v*v^T. Returns false (leaving `l`
/// partially modified) if the downdated matrix is not positive definite.
bool cholesky_rank1_downdate(Matrix& l, Vector v);

/// Symmetrize in place: (a + a^T) / 2.
inline void symmetrize(Matrix& a) { a = 0.5 * (a + a.transpose()).eval(); }

}  // namespace mpd
