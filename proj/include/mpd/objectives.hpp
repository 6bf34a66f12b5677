#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "mpd/common.hpp"

namespace mpd {

/// splitmix64 finalizer applied to seed and counter; the basis of every
/// seeded stream in the library.
std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t counter);

/// Uniform in [0, 1) with 53 random bits.
double counter_uniform(std::uint64_t seed, std::uint64_t counter);

/// Standard normal via Box-Muller over counters 2i and 2i+1.
double counter_normal(std::uint64_t seed, std::uint64_t index);

/// Run-scoped observation noise: the i-th draw is a pure function of (seed, i).
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) : seed_(seed) {}

  double next() { return counter_normal(seed_, position_++); }
  std::uint64_t position() const { return position_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
};

enum class Sense { kMinimize, kMaximize };

/// Black-box objective over a box. `value` is the noiseless function in its
/// natural sense; `evaluate` adds noise and flips maximization problems so
/// that callers always minimize.
class Objective {
 public:
  Objective(std::string name, Box box, double noise_std, Sense sense = Sense::kMinimize);
  virtual ~Objective() = default;

  Objective(const Objective&) = delete;
  Objective& operator=(const Objective&) = delete;

  const std::string& name() const { return name_; }
  const Box& box() const { return box_; }
  Eigen::Index dim() const { return box_.dim(); }
  double noise_std() const { return noise_std_; }
  Sense sense() const { return sense_; }

  virtual double value(const Vector& x) = 0;

  /// Minimization-sense observation f(x) + noise_std * z. Throws DomainError
  /// when x is outside the box.
  double evaluate(const Vector& x, NoiseStream& noise);

  /// Converts a minimization-sense value back to the objective's own sense.
  double report(double y) const { return sense_ == Sense::kMaximize ? -y : y; }

 private:
  std::string name_;
  Box box_;
  double noise_std_;
  Sense sense_;
};

/// Random-Fourier-feature approximation of a GP sample with an ARD
/// squared-exponential kernel: f(x) = s sqrt(2/F) sum_i a_i cos(w_i^T x + b_i).
class RffObjective : public Objective {
 public:
  RffObjective(Vector lengthscales, double outputscale, int features, std::uint64_t seed,
               double noise_std = 0.0, Sense sense = Sense::kMinimize, Box box = {});

  double value(const Vector& x) override;
  /// Exact gradient of the noiseless function (for tests).
  Vector gradient(const Vector& x) const;

  const Matrix& frequencies() const { return w_; }

 private:
  Matrix w_;  // F x d
  Vector b_;
  Vector a_;
  double scale_;
};

/// Default synthetic lengthscale for dimension d: 0.1 sqrt(d) in every coordinate.
double default_rff_lengthscale(Eigen::Index d);

std::unique_ptr<RffObjective> make_rff_objective(Eigen::Index d, double lengthscale,
                                                 double outputscale, int features,
                                                 std::uint64_t seed, double noise_std = 0.0,
                                                 Sense sense = Sense::kMinimize);

/// Analytic objective with a known gradient.
class AnalyticObjective : public Objective {
 public:
  using Objective::Objective;
  virtual Vector gradient(const Vector& x) const = 0;
  /// A global optimizer over the box, in the objective's own sense.
  virtual Vector minimizer() const = 0;
};

/// ||x - c||^2
class QuadraticObjective : public AnalyticObjective {
 public:
  QuadraticObjective(Vector center, Box box, double noise_std = 0.0);
  double value(const Vector& x) override;
  Vector gradient(const Vector& x) const override;
  Vector minimizer() const override { return center_; }

 private:
  Vector center_;
};

/// a^T x
class LinearObjective : public AnalyticObjective {
 public:
  LinearObjective(Vector slope, Box box, double noise_std = 0.0, Sense sense = Sense::kMinimize);
  double value(const Vector& x) override;
  Vector gradient(const Vector& /*x*/) const override { return slope_; }
  /// Optimal vertex: for minimization, lower where a_k > 0 and upper otherwise.
  Vector minimizer() const override;

 private:
  Vector slope_;
};

/// sum_k w_k |x_k - c_k|, piecewise linear with kinks on the planes x_k = c_k.
class RidgeObjective : public AnalyticObjective {
 public:
  RidgeObjective(Vector center, Vector weights, Box box, double noise_std = 0.0);
  double value(const Vector& x) override;
  /// Subgradient choosing +w_k on the kink.
  Vector gradient(const Vector& x) const override;
  Vector minimizer() const override { return center_; }

 private:
  Vector center_;
  Vector weights_;
};

/// Registered names: "quadratic", "linear", "ridge". Unit box; centers at
/// 0.3 in every coordinate; linear slope alternates +1, -1.
std::unique_ptr<AnalyticObjective> analytic_suite(const std::string& name, Eigen::Index d,
                                                  double noise_std = 0.0);

/// k points of a Sobol sequence (starting at the origin) with a seeded
/// random digital shift, mapped affinely into `box` (k x d).
Matrix sobol_starts(Eigen::Index d, Eigen::Index k, const Box& box, std::uint64_t seed);

}  // namespace mpd
