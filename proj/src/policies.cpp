#include "mpd/policies.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>

#include <fmt/format.h>

#include "mpd/descent.hpp"

namespace mpd {

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::kMpd: return "mpd";
    case PolicyKind::kGibo: return "gibo";
    case PolicyKind::kArs: return "ars";
    case PolicyKind::kCustom: return "custom";
  }
  return "?";
}

std::string to_string(LearnRule r) {
  switch (r) {
    case LearnRule::kMpdAcq: return "mpd_acq";
    case LearnRule::kTraceAcq: return "trace_acq";
    case LearnRule::kNone: return "none";
  }
  return "?";
}

std::string to_string(MoveRule r) {
  switch (r) {
    case MoveRule::kMpdDirection: return "mpd_direction";
    case MoveRule::kExpectedGradient: return "expected_gradient";
    case MoveRule::kArsUpdate: return "ars_update";
  }
  return "?";
}

std::string to_string(Phase p) { return p == Phase::kObserve ? "observe" : "learn"; }

PolicyKind parse_policy_kind(const std::string& s) {
  for (auto k : {PolicyKind::kMpd, PolicyKind::kGibo, PolicyKind::kArs, PolicyKind::kCustom})
    if (to_string(k) == s) return k;
  throw ConfigError(fmt::format("unknown policy kind '{}' (mpd, gibo, ars, custom)", s));
}

LearnRule parse_learn_rule(const std::string& s) {
  for (auto r : {LearnRule::kMpdAcq, LearnRule::kTraceAcq, LearnRule::kNone})
    if (to_string(r) == s) return r;
  throw ConfigError(fmt::format("unknown learn rule '{}' (mpd_acq, trace_acq, none)", s));
}

MoveRule parse_move_rule(const std::string& s) {
  for (auto r : {MoveRule::kMpdDirection, MoveRule::kExpectedGradient, MoveRule::kArsUpdate})
    if (to_string(r) == s) return r;
  throw ConfigError(
      fmt::format("unknown move rule '{}' (mpd_direction, expected_gradient, ars_update)", s));
}

PolicyConfig PolicyConfig::mpd() { return PolicyConfig{}; }

PolicyConfig PolicyConfig::gibo() {
  PolicyConfig c;
  c.kind = PolicyKind::kGibo;
  c.learn = LearnRule::kTraceAcq;
  c.move = MoveRule::kExpectedGradient;
  return c;
}

PolicyConfig PolicyConfig::ars_default() {
  PolicyConfig c;
  c.kind = PolicyKind::kArs;
  c.learn = LearnRule::kNone;
  c.move = MoveRule::kArsUpdate;
  c.queries_per_iteration = 0;
  return c;
}

PolicyConfig PolicyConfig::variant(LearnRule learn, MoveRule move) {
  PolicyConfig c;
  c.kind = PolicyKind::kCustom;
  c.learn = learn;
  c.move = move;
  return c;
}

void PolicyConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations N must be >= 0");
  if (budget < 0) throw ConfigError("budget must be >= 0");
  if (queries_per_iteration < 0) throw ConfigError("queries_per_iteration M must be >= 0");
  if (max_consecutive_failures < 1) throw ConfigError("max_consecutive_failures must be >= 1");

  const bool ars_move = move == MoveRule::kArsUpdate;
  switch (kind) {
    case PolicyKind::kMpd:
      if (learn != LearnRule::kMpdAcq || move != MoveRule::kMpdDirection)
        throw ConfigError("policy mpd requires learn = mpd_acq and move = mpd_direction");
      break;
    case PolicyKind::kGibo:
      if (learn != LearnRule::kTraceAcq || move != MoveRule::kExpectedGradient)
        throw ConfigError("policy gibo requires learn = trace_acq and move = expected_gradient");
      break;
    case PolicyKind::kArs:
      if (learn != LearnRule::kNone || !ars_move)
        throw ConfigError("policy ars forbids GP learn rules and requires move = ars_update");
      break;
    case PolicyKind::kCustom:
      if (ars_move) throw ConfigError("custom policies combine GP learn rules with GP move rules");
      break;
  }

  if (kind == PolicyKind::kArs) {
    if (ars.directions < 1) throw ConfigError("ars.directions must be >= 1");
    if (ars.elites < 1 || ars.elites > ars.directions)
      throw ConfigError("ars.elites must lie in [1, ars.directions]");
    if (!(ars.perturbation > 0.0)) throw ConfigError("ars.perturbation must be > 0");
    if (!(ars.step > 0.0)) throw ConfigError("ars.step must be > 0");
    return;
  }
  if (move == MoveRule::kMpdDirection) {
    MoveConfig m{step, threshold, max_inner_steps, Box::unit(1)};
    m.validate();
  }
  if (move == MoveRule::kExpectedGradient && !(gradient_step > 0.0))
    throw ConfigError("gradient_step eta must be > 0");
  if (acq_restarts < 1) throw ConfigError("acq_restarts must be >= 1");
  if (acq_iterations < 0) throw ConfigError("acq_iterations must be >= 0");
  if (!(acq_region_scale > 0.0)) throw ConfigError("acq_region_scale must be > 0");
  if (gp.window < 1) throw ConfigError("gp.window must be >= 1");
  if (gp.refit_every < 1) throw ConfigError("gp.refit_every must be >= 1");
  gp.priors.validate();
  gp.init.validate();
}

double RunTrace::best_y() const {
  return records.empty() ? std::numeric_limits<double>::infinity() : records.back().best_y;
}

namespace {

struct Aborted {
  std::string reason;
};

/// Evaluation bookkeeping shared by all policies.
class Evaluator {
 public:
  Evaluator(Objective& obj, const PolicyConfig& cfg, RunTrace& trace)
      : obj_(obj), cfg_(cfg), trace_(trace), noise_(cfg.noise_seed) {}

  bool budget_left() const {
    return cfg_.budget == 0 || trace_.records.size() < static_cast<std::size_t>(cfg_.budget);
  }

  /// Evaluates with retries and appends a record; throws Aborted.
  TraceRecord& observe(const Vector& x, Phase phase) {
    int failures = 0;
    for (;;) {
      try {
        const double y = obj_.evaluate(x, noise_);
        TraceRecord r;
        r.eval_index = trace_.records.size();
        r.phase = phase;
        r.x = x;
        r.y = y;
        r.best_y = trace_.records.empty() ? y : std::min(y, trace_.records.back().best_y);
        trace_.records.push_back(std::move(r));
        return trace_.records.back();
      } catch (const EvaluationError& e) {
        trace_.errors.push_back(
            fmt::format("evaluation {} attempt {}: {}", trace_.records.size(), failures + 1, e.what()));
        if (++failures >= cfg_.max_consecutive_failures) {
          throw Aborted{fmt::format("{} consecutive evaluation failures; last: {}", failures, e.what())};
        }
      }
    }
  }

 private:
  Objective& obj_;
  const PolicyConfig& cfg_;
  RunTrace& trace_;
  NoiseStream noise_;
};

void check_start(const Objective& obj, const Vector& x0) {
  require_dim(x0.size(), obj.dim(), "policy start point");
  if (!obj.box().contains(x0)) throw DomainError("policy start point lies outside the domain box");
}

double safe_max_prob(const GpPosterior& gp, const Vector& x) {
  const GradientBelief b = gradient_posterior(gp, x);
  return b.mean().isZero(0.0) ? 0.5 : max_descent_probability(b);
}

}  // namespace

RunTrace run_variant(Objective& objective, const Vector& x0, const PolicyConfig& cfg) {
  cfg.validate();
  check_start(objective, x0);
  if (cfg.kind == PolicyKind::kArs) throw ConfigError("run_variant cannot execute an ars policy");

  const Eigen::Index d = objective.dim();
  const Box& box = objective.box();
  RunTrace trace;
  trace.policy = to_string(cfg.kind);
  trace.x0 = x0;
  Evaluator eval(objective, cfg, trace);
  std::mt19937_64 rng(cfg.seed);

  Dataset data(d, cfg.gp.window);
  KernelParams params = cfg.gp.init;
  if (params.dim() == 1 && d > 1) params.lengthscales = Vector::Constant(d, params.lengthscales(0));
  require_dim(params.dim(), d, "gp.init lengthscales");
  // prior-only model until the first observation
  std::optional<GpPosterior> gp;
  gp.emplace(data, params);
  std::size_t observations = 0;

  const auto update_gp = [&](const Vector& z, double y) {
    data.append(z, y);
    const bool refit = cfg.gp.refit && observations % static_cast<std::size_t>(cfg.gp.refit_every) == 0;
    ++observations;
    FitOptions fo = cfg.gp.fit;
    fo.seed = counter_hash(cfg.seed, observations);
    gp.emplace(fit_gp(data, cfg.gp.priors, params, refit, fo));
    params = gp->params();
  };

  AcqOptConfig acq;
  acq.batch_size = 1;
  acq.restarts = cfg.acq_restarts;
  acq.max_iterations = cfg.acq_iterations;
  acq.region_scale = cfg.acq_region_scale;
  acq.bounds = box;
  const AcquisitionKind acq_kind =
      cfg.learn == LearnRule::kMpdAcq ? AcquisitionKind::kMpd : AcquisitionKind::kTrace;
  const int m_queries = cfg.learn == LearnRule::kNone ? 0 : cfg.queries_per_iteration;
  const MoveConfig move{cfg.step, cfg.threshold, cfg.max_inner_steps, box};
  const Vector eta = cfg.gradient_step * box.width();

  Vector x = x0;
  try {
    for (int t = 0; cfg.budget > 0 || t <= cfg.iterations; ++t) {
      if (!eval.budget_left()) break;
      TraceRecord* last = &eval.observe(x, Phase::kObserve);
      update_gp(x, last->y);
      last->max_descent_prob = safe_max_prob(*gp, x);

      for (int m = 0; m < m_queries && eval.budget_left(); ++m) {
        const AcqOptResult pick = optimize_acquisition(*gp, x, acq_kind, acq, rng);
        const Vector z = pick.batch.points.row(0).transpose();
        last = &eval.observe(z, Phase::kLearn);
        last->acq_value = pick.value;
        last->acq_fallback = pick.fallback;
        update_gp(z, last->y);
        last->max_descent_prob = safe_max_prob(*gp, x);
      }

      if (cfg.move == MoveRule::kMpdDirection) {
        const MoveResult r = move_loop(*gp, x, move);
        x = r.x;
        last->inner_steps = r.inner_steps;
      } else {
        const Vector mu = gradient_posterior(*gp, x).mean();
        const double norm = mu.norm();
        if (norm > 0.0) {
          x = box.clip(x - (eta.array() * (mu / norm).array()).matrix());
          last->inner_steps = 1;
        } else {
          last->inner_steps = 0;
        }
      }
    }
  } catch (const Aborted& a) {
    trace.aborted = true;
    trace.abort_reason = a.reason;
  } catch (const NumericalError& e) {
    trace.aborted = true;
    trace.abort_reason = fmt::format("numerical failure: {}", e.what());
  }
  trace.final_x = x;
  return trace;
}

RunTrace run_mpd(Objective& objective, const Vector& x0, const PolicyConfig& cfg) {
  if (cfg.kind != PolicyKind::kMpd) throw ConfigError("run_mpd requires kind = mpd");
  return run_variant(objective, x0, cfg);
}

RunTrace run_gibo(Objective& objective, const Vector& x0, const PolicyConfig& cfg) {
  if (cfg.kind != PolicyKind::kGibo) throw ConfigError("run_gibo requires kind = gibo");
  return run_variant(objective, x0, cfg);
}

RunTrace run_ars(Objective& objective, const Vector& x0, const PolicyConfig& cfg) {
  if (cfg.kind != PolicyKind::kArs) throw ConfigError("run_ars requires kind = ars");
  cfg.validate();
  check_start(objective, x0);
  const Eigen::Index d = objective.dim();
  const Box& box = objective.box();
  const ArsParams& p = cfg.ars;
  RunTrace trace;
  trace.policy = to_string(cfg.kind);
  trace.x0 = x0;
  Evaluator eval(objective, cfg, trace);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;

  Vector x = x0;
  try {
    for (int t = 0; cfg.budget > 0 || t <= cfg.iterations; ++t) {
      if (!eval.budget_left()) break;
      Matrix dirs(p.directions, d);
      for (Eigen::Index i = 0; i < dirs.rows(); ++i)
        for (Eigen::Index k = 0; k < d; ++k) dirs(i, k) = normal(rng);

      // rewards are negated minimization-sense observations
      Vector r_plus(p.directions), r_minus(p.directions);
      bool complete = true;
      for (int i = 0; i < p.directions && complete; ++i) {
        const Vector di = dirs.row(i).transpose();
        for (int sign : {+1, -1}) {
          if (!eval.budget_left()) {
            complete = false;
            break;
          }
          const double y = eval.observe(box.clip(x + sign * p.perturbation * di), Phase::kObserve).y;
          (sign > 0 ? r_plus : r_minus)(i) = -y;
        }
      }
      if (!complete) break;

      std::vector<int> order(static_cast<std::size_t>(p.directions));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return std::max(r_plus(a), r_minus(a)) > std::max(r_plus(b), r_minus(b));
      });
      Vector used(2 * p.elites);
      Vector g = Vector::Zero(d);
      for (int e = 0; e < p.elites; ++e) {
        const int i = order[static_cast<std::size_t>(e)];
        used(2 * e) = r_plus(i);
        used(2 * e + 1) = r_minus(i);
        g += (r_plus(i) - r_minus(i)) * dirs.row(i).transpose();
      }
      const double mean = used.mean();
      const double sd = std::sqrt((used.array() - mean).square().sum() / static_cast<double>(used.size()));
      g *= p.step / (p.elites * std::max(sd, 1e-8));
      x = box.clip(x + g);
      trace.records.back().inner_steps = 1;
    }
  } catch (const Aborted& a) {
    trace.aborted = true;
    trace.abort_reason = a.reason;
  }
  trace.final_x = x;
  return trace;
}

RunTrace run_policy(Objective& objective, const Vector& x0, const PolicyConfig& cfg) {
  return cfg.kind == PolicyKind::kArs ? run_ars(objective, x0, cfg) : run_variant(objective, x0, cfg);
}

}  // namespace mpd
