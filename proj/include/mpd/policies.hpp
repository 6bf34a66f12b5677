#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mpd/acquisition.hpp"
#include "mpd/gp.hpp"
#include "mpd/objectives.hpp"

namespace mpd {

enum class PolicyKind { kMpd, kGibo, kArs, kCustom };
enum class LearnRule { kMpdAcq, kTraceAcq, kNone };
enum class MoveRule { kMpdDirection, kExpectedGradient, kArsUpdate };

std::string to_string(PolicyKind k);
std::string to_string(LearnRule r);
std::string to_string(MoveRule r);
PolicyKind parse_policy_kind(const std::string& s);
LearnRule parse_learn_rule(const std::string& s);
MoveRule parse_move_rule(const std::string& s);

struct ArsParams {
  int directions = 4;           // k
  double perturbation = 0.02;   // nu
  double step = 0.02;           // alpha
  int elites = 4;               // b
};

struct GpSettings {
  HyperPriors priors;
  /// Starting point of the first MAP fit; later fits warm-start from the
  /// previous values. A single lengthscale is broadcast to every dimension.
  KernelParams init{Vector::Constant(1, 0.5), 1.0, 1e-3};
  bool refit = true;
  /// Refit hyperparameters on every k-th observation; other updates reuse the last values.
  int refit_every = 1;
  FitOptions fit;
  std::size_t window = 32;  // N_max
};

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kMpd;
  LearnRule learn = LearnRule::kMpdAcq;
  MoveRule move = MoveRule::kMpdDirection;

  /// Outer iterations t = 0..N in iteration-driven mode (budget == 0).
  int iterations = 0;
  /// Stop after exactly this many evaluations; 0 selects iteration-driven mode.
  int budget = 0;
  int queries_per_iteration = 1;  // M

  double step = 1e-3;             // delta
  double threshold = 0.65;        // p*
  int max_inner_steps = 1000;
  /// Expected-gradient step as a fraction of the box width.
  double gradient_step = 0.01;    // eta

  int acq_restarts = 8;
  int acq_iterations = 50;
  double acq_region_scale = 1.0;

  ArsParams ars;
  GpSettings gp;

  std::uint64_t seed = 0;
  std::uint64_t noise_seed = 0;
  int max_consecutive_failures = 3;

  static PolicyConfig mpd();
  static PolicyConfig gibo();
  static PolicyConfig ars_default();
  static PolicyConfig variant(LearnRule learn, MoveRule move);

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

enum class Phase { kObserve, kLearn };
std::string to_string(Phase p);

struct TraceRecord {
  std::uint64_t eval_index = 0;
  Phase phase = Phase::kObserve;
  Vector x;
  /// Observation in minimization sense.
  double y = 0.0;
  double best_y = 0.0;
  /// At the current iterate after the GP update that follows this evaluation.
  double max_descent_prob = std::numeric_limits<double>::quiet_NaN();
  double acq_value = std::numeric_limits<double>::quiet_NaN();
  /// Move steps taken after this evaluation (last record of an outer iteration), else -1.
  int inner_steps = -1;
  bool acq_fallback = false;
};

struct RunTrace {
  std::string policy;
  Vector x0;
  Vector final_x;
  std::vector<TraceRecord> records;
  std::vector<std::string> errors;
  bool aborted = false;
  std::string abort_reason;

  std::size_t evaluations() const { return records.size(); }
  /// +inf for an empty trace.
  double best_y() const;
};

/// Local BO with the configured learn/move rules. Every
/// outer iteration observes the current iterate, runs M learning queries,
/// then moves. Evaluation failures are retried at the same point; after
/// `max_consecutive_failures` in a row the run stops with `aborted` set.
RunTrace run_variant(Objective& objective, const Vector& x0, const PolicyConfig& cfg);

/// run_variant restricted to (mpd_acq, mpd_direction).
RunTrace run_mpd(Objective& objective, const Vector& x0, const PolicyConfig& cfg);

/// run_variant restricted to (trace_acq, expected_gradient).
RunTrace run_gibo(Objective& objective, const Vector& x0, const PolicyConfig& cfg);

/// Augmented random search, basic update: 2k evaluations per iteration at
/// clip(x +- nu d_i), step along the reward-weighted elite directions.
RunTrace run_ars(Objective& objective, const Vector& x0, const PolicyConfig& cfg);

/// Dispatch on cfg.kind.
RunTrace run_policy(Objective& objective, const Vector& x0, const PolicyConfig& cfg);

}  // namespace mpd
