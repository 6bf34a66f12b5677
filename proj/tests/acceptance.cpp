// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <signal.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mpd/acquisition.hpp"
#include "mpd/descent.hpp"
#include "mpd/experiment.hpp"
#include "mpd/external.hpp"
#include "mpd/gp.hpp"
#include "oracles.hpp"

using namespace mpd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Descent probability computed directly from the belief moments.
double eq2(const Vector& mu, const Matrix& cov, const Vector& v) {
  return phi(-v.dot(mu) / std::sqrt(v.dot(cov * v)));
}

GradientBelief random_belief(Eigen::Index d, std::mt19937_64& rng) {
  return GradientBelief(oracle::standard_normal(d, rng), oracle::random_spd(d, rng));
}

Matrix unit_directions(Eigen::Index d, int n, std::mt19937_64& rng) {
  Matrix v(d, n);
  std::normal_distribution<double> z;
  for (int j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) v(i, j) = z(rng);
    v.col(j).normalize();
  }
  return v;
}

double best_over(const Vector& mu, const Matrix& cov, const Matrix& dirs) {
  const Vector num = dirs.transpose() * mu;
  const Vector den = (dirs.array() * (cov * dirs).array()).colwise().sum().sqrt().transpose();
  double best = 0.0;
  for (Eigen::Index j = 0; j < dirs.cols(); ++j) best = std::max(best, phi(-num(j) / den(j)));
  return best;
}

struct Instance {
  KernelParams params;
  Dataset data;
  Vector x;
};

Instance random_instance(Eigen::Index d, int n, std::mt19937_64& rng, double noise = 1e-3) {
  Instance inst{KernelParams{oracle::random_vector(d, rng, 0.3, 0.8), oracle::random_vector(1, rng, 0.5, 2.0)(0),
                             noise},
                Dataset(d, 64), oracle::random_vector(d, rng, 0.2, 0.8)};
  for (int i = 0; i < n; ++i) {
    const Vector xi = oracle::random_vector(d, rng);
    inst.data.append(xi, std::sin(3.0 * xi.sum()) + 0.5 * xi(0));
  }
  return inst;
}

Batch near_batch(const Vector& x, int q, std::mt19937_64& rng, double radius = 0.3) {
  Matrix z(q, x.size());
  for (int i = 0; i < q; ++i) z.row(i) = (x + oracle::random_vector(x.size(), rng, -radius, radius)).transpose();
  return Batch{z};
}

oracle::Gaussian conditioned_joint(const GpPosterior& gp, const Vector& x, const Batch& z) {
  const Eigen::Index n = gp.size(), q = z.size(), d = x.size();
  const Matrix joint =
      oracle::joint_prior(gp.X(), z.points, x, gp.params(), gp.jitter(), gp.params().base_jitter());
  return oracle::condition(Vector::Zero(n + q + d), joint, n, Vector(gp.y().array() - gp.prior_mean()));
}

// --------------------------------------------------------------------------

Outcome criterion_1() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst_gap = -1.0, worst_eq = 0.0;
  for (int t = 0; t < 300; ++t) {
    const Eigen::Index d = t % 3 == 0 ? 2 : (t % 3 == 1 ? 5 : 20);
    const GradientBelief b = random_belief(d, rng);
    const Vector v = most_probable_direction(b);
    const double at_v = eq2(b.mean(), b.cov(), v);
    const double best = best_over(b.mean(), b.cov(), unit_directions(d, 100000, rng));
    worst_gap = std::max(worst_gap, best - at_v);
    Eigen::FullPivLU<Matrix> lu(b.cov());
    const double closed = phi(std::sqrt(b.mean().dot(lu.solve(b.mean()))));
    worst_eq = std::max({worst_eq, std::abs(closed - at_v), std::abs(max_descent_probability(b) - at_v)});
  }
  const double secs = seconds_since(t0);
  o.require(worst_gap <= 1e-6, fmt::format("random direction beats v* by {:.3g}", worst_gap));
  o.require(worst_eq <= 1e-10, fmt::format("closed form differs from descent probability at v* by {:.3g}", worst_eq));
  o.require(secs < 120.0, fmt::format("took {:.1f} s", secs));
  if (o.pass) {
    o.detail = fmt::format("300 beliefs, 1e5 directions each; max(best random - v*) = {:.2g}, "
                           "max closed-form error = {:.2g}, {:.1f} s",
                           worst_gap, worst_eq, secs);
  }
  return o;
}

Outcome criterion_2() {
  Outcome o;
  auto belief = [](double m0, double m1, double c0, double c1) {
    Vector mu(2);
    mu << m0, m1;
    Matrix cov = Matrix::Zero(2, 2);
    cov(0, 0) = c0;
    cov(1, 1) = c1;
    return GradientBelief(mu, cov);
  };
  const GradientBelief a = belief(-1.0, 0.0, 0.01, 1.0);
  const GradientBelief b = belief(-1.0, 0.0, 1.0, 0.01);
  const GradientBelief c = belief(-0.5, -1.0, 0.01, 1.0);

  const double pa = max_descent_probability(a);
  const Vector va = most_probable_direction(a);
  const Vector neg_a = (-a.mean()).normalized();
  o.require(pa >= 1.0 - 1e-9 && std::abs(pa - phi(10.0)) < 1e-12, fmt::format("panel (a) probability {}", pa));
  o.require((va - Vector::Unit(2, 0)).norm() < 1e-12 && (va - neg_a).norm() < 1e-12,
            "panel (a) direction is not [1, 0]");

  const double pb = max_descent_probability(b);
  o.require(std::abs(pb - 0.8413) <= 1e-4, fmt::format("panel (b) probability {:.6f}", pb));

  const Vector vc = most_probable_direction(c);
  Vector want(2);
  want << 50.0, 1.0;
  want.normalize();
  const Vector neg_c = (-c.mean()).normalized();
  const double angle = std::acos(std::clamp(vc.dot(neg_c), -1.0, 1.0)) * 180.0 / M_PI;
  // 10^6-point angular grid
  const int m = 1000000;
  double grid_best = -1.0, grid_angle = 0.0;
  for (int i = 0; i < m; ++i) {
    const double t = 2.0 * M_PI * i / m;
    Vector v(2);
    v << std::cos(t), std::sin(t);
    const double p = eq2(c.mean(), c.cov(), v);
    if (p > grid_best) {
      grid_best = p;
      grid_angle = std::acos(std::clamp(v.dot(neg_c), -1.0, 1.0)) * 180.0 / M_PI;
    }
  }
  o.require((vc - want).norm() < 1e-10, "panel (c) direction is not proportional to [50, 1]");
  o.require(std::abs(angle - 62.3) <= 0.1, fmt::format("panel (c) angle {:.4f} deg", angle));
  o.require(std::abs(grid_angle - angle) <= 0.1, fmt::format("grid argmax angle {:.4f} deg", grid_angle));
  o.require(eq2(c.mean(), c.cov(), vc) >= grid_best, "grid point beats v* in panel (c)");
  o.require(a.cov().trace() == b.cov().trace() && b.cov().trace() == c.cov().trace(), "traces differ");
  if (o.pass) {
    o.detail = fmt::format("(a) p = {:.12f}, v* = [1, 0]; (b) p = {:.4f}; (c) angle = {:.2f} deg (grid {:.2f}); "
                           "equal traces {:.2f}",
                           pa, pb, angle, grid_angle, a.cov().trace());
  }
  return o;
}

Outcome criterion_3() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(303);
  double worst_z = 0.0, worst_cov = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int q = t % 2 == 0 ? 1 : 3;
    const Instance inst = random_instance(3 + t % 3, 8 + t % 5, rng);
    const GpPosterior gp(inst.data, inst.params);
    const Batch z = near_batch(inst.x, q, rng);
    const Eigen::Index d = inst.x.size();

    const oracle::Gaussian j = conditioned_joint(gp, inst.x, z);
    const Matrix dense = oracle::condition(Vector::Zero(q + d), j.cov, q, Vector::Zero(q)).cov;
    worst_cov = std::max(worst_cov, (fantasy_gradient(gp, inst.x, z).sigma_cond - dense).cwiseAbs().maxCoeff());

    // Monte-Carlo over fantasy observations y_Z ~ N(m_Z, S_ZZ)
    const Vector mz = j.mean.head(q), mg = j.mean.tail(d);
    const Matrix szz = j.cov.topLeftCorner(q, q), sgz = j.cov.bottomLeftCorner(d, q);
    const Matrix gain = sgz * Eigen::FullPivLU<Matrix>(szz).inverse();
    Matrix cond = j.cov.bottomRightCorner(d, d) - gain * sgz.transpose();
    cond = 0.5 * (cond + cond.transpose()).eval();
    const Eigen::LDLT<Matrix> solve(cond);
    const Matrix lz = Eigen::LLT<Matrix>(szz).matrixL();
    const int draws = 100000;
    double s1 = 0.0, s2 = 0.0;
    for (int s = 0; s < draws; ++s) {
      const Vector mu = mg + gain * (lz * oracle::standard_normal(q, rng));
      const double val = mu.dot(solve.solve(mu));
      s1 += val;
      s2 += val * val;
    }
    const double mean = s1 / draws;
    const double se = std::sqrt((s2 / draws - mean * mean) / draws);
    worst_z = std::max(worst_z, std::abs(mpd_acquisition(gp, inst.x, z) - mean) / se);
  }
  const double secs = seconds_since(t0);
  o.require(worst_z <= 3.0, fmt::format("closed form is {:.2f} MC standard errors away", worst_z));
  o.require(worst_cov <= 1e-8, fmt::format("conditioned covariance differs from dense oracle by {:.3g}", worst_cov));
  o.require(secs < 300.0, fmt::format("took {:.1f} s", secs));
  if (o.pass) {
    o.detail = fmt::format("20 instances, q in {{1, 3}}, 1e5 draws; worst |z| = {:.2f}, covariance error {:.2g}, "
                           "{:.1f} s",
                           worst_z, worst_cov, secs);
  }
  return o;
}

Outcome criterion_4() {
  Outcome o;
  std::mt19937_64 rng(404);
  double e1 = 0.0, e2 = 0.0, e3 = 0.0;
  for (Eigen::Index d : {1, 5, 25}) {
    const double scale = std::sqrt(static_cast<double>(d));
    const KernelParams p{oracle::random_vector(d, rng, 0.3, 0.8) * scale, 1.3, 1e-3};
    Dataset data(d, 64);
    for (int i = 0; i < 12; ++i) {
      const Vector xi = oracle::random_vector(d, rng);
      data.append(xi, std::sin(3.0 * xi.sum() / scale) + xi(0));
    }
    const GpPosterior gp(data, p);
    for (int t = 0; t < 100; ++t) {
      const Vector x = oracle::random_vector(d, rng, 0.1, 0.9);
      const Vector x2 = x + oracle::random_vector(d, rng, -0.2, 0.2) * scale;
      Matrix one = x2.transpose();

      // first derivative of k(x, x2) in x
      const Vector g = kernel_grad_x1(x, one, p).col(0);
      const Vector g_fd = oracle::fd_gradient([&](const Vector& a) { return kernel_eval(a, x2, p); }, x, 1e-6);
      e1 = std::max(e1, (g - g_fd).cwiseAbs().maxCoeff() / std::max(1.0, g.cwiseAbs().maxCoeff()));

      // mixed second derivative: d/dx2_j of d k / dx_i
      const Matrix h = kernel_hess_cross(x, x2, p);
      for (Eigen::Index jdx = 0; jdx < d; ++jdx) {
        Vector xp = x2, xm = x2;
        xp(jdx) += 1e-5;
        xm(jdx) -= 1e-5;
        const Vector col = (kernel_grad_x1(x, Matrix(xp.transpose()), p).col(0) -
                            kernel_grad_x1(x, Matrix(xm.transpose()), p).col(0)) /
                           2e-5;
        e2 = std::max(e2, (h.col(jdx) - col).cwiseAbs().maxCoeff() / std::max(1.0, h.cwiseAbs().maxCoeff()));
      }

      // gradient posterior mean against the posterior mean of f
      const Vector mu = gradient_posterior(gp, x).mean();
      const Vector mu_fd =
          oracle::fd_gradient([&](const Vector& a) { return posterior_mean_var(gp, a).mean; }, x, 1e-5);
      e3 = std::max(e3, (mu - mu_fd).cwiseAbs().maxCoeff() / std::max(1.0, mu.cwiseAbs().maxCoeff()));
    }
  }
  o.require(e1 <= 1e-5, fmt::format("kernel gradient FD error {:.3g}", e1));
  o.require(e2 <= 1e-4, fmt::format("kernel cross-Hessian FD error {:.3g}", e2));
  o.require(e3 <= 1e-4, fmt::format("gradient posterior mean FD error {:.3g}", e3));
  if (o.pass) {
    o.detail = fmt::format("100 points x d in {{1, 5, 25}}; errors {:.2g} / {:.2g} / {:.2g}", e1, e2, e3);
  }
  return o;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mpd_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

ExperimentConfig shipped_config() {
  return load_config(fs::path(MPD_SOURCE_DIR) / "configs" / "synthetic-d25.toml");
}

Outcome criterion_5() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = shipped_config();
  cfg.budget = 300;
  cfg.runs = 10;
  const ExperimentResult res = run_experiment(cfg, scratch("c5"));
  const Summary s = summarize(res.dir);
  o.require(res.failures == 0, fmt::format("{} runs failed", res.failures));
  o.require(s.problems.empty(), s.problems.empty() ? "" : s.problems.front());
  double mpd = NAN, gibo = NAN, ars = NAN;
  std::string table;
  for (const SummaryRow& r : s.rows) {
    if (r.policy == "mpd") mpd = r.mean;
    if (r.policy == "gibo") gibo = r.mean;
    if (r.policy == "ars") ars = r.mean;
    o.require(r.terminal.size() == 10, fmt::format("{} has {} terminal values", r.policy, r.terminal.size()));
    table += fmt::format("{} {:.4f} ({:.4f}); ", r.policy, r.mean, r.stderr_);
  }
  for (const RunResult& r : res.runs) {
    o.require(r.trace.evaluations() == 300, fmt::format("{} run {} has {} evaluations", r.policy, r.run,
                                                        r.trace.evaluations()));
  }
  o.require(mpd >= gibo, fmt::format("MPD mean {:.4f} < GIBO mean {:.4f}", mpd, gibo));
  o.require(mpd >= ars, fmt::format("MPD mean {:.4f} < ARS mean {:.4f}", mpd, ars));
  o.detail = o.pass ? fmt::format("d = 25, B = 300, 10 shared starts: {}{:.0f} s", table, seconds_since(t0))
                    : o.detail + " [" + table + "]";
  return o;
}

Outcome criterion_6() {
  Outcome o;
  ExperimentConfig cfg = shipped_config();
  cfg.budget = 60;
  cfg.runs = 2;
  const PolicyConfig base = cfg.policies[0].config;
  cfg.policies.clear();
  auto add = [&](const std::string& name, PolicyConfig c) { cfg.policies.push_back({name, c}); };
  PolicyConfig c = base;
  c.kind = PolicyKind::kCustom;
  c.learn = LearnRule::kTraceAcq;
  add("trace_mpd", c);
  c = base;
  c.kind = PolicyKind::kCustom;
  c.move = MoveRule::kExpectedGradient;
  add("mpd_eg", c);
  for (double p : {0.5, 0.85, 0.95}) {
    c = base;
    c.threshold = p;
    add(fmt::format("mpd_p{}", p), c);
  }
  for (double delta : {1e-4, 1e-2}) {
    c = base;
    c.step = delta;
    add(fmt::format("mpd_delta{}", delta), c);
  }
  add("mpd", base);
  cfg.validate();
  const ExperimentResult res = run_experiment(cfg, scratch("c6"));
  o.require(res.failures == 0, fmt::format("{} runs failed", res.failures));
  for (const RunResult& r : res.runs) {
    o.require(r.trace.evaluations() == 60, fmt::format("{} run {}: {} evaluations", r.policy, r.run,
                                                       r.trace.evaluations()));
    for (std::size_t i = 0; i < r.trace.records.size(); ++i) {
      const Phase want = i % 2 == 0 ? Phase::kObserve : Phase::kLearn;
      o.require(r.trace.records[i].phase == want, fmt::format("{} run {}: phase out of order at {}", r.policy,
                                                              r.run, i));
    }
  }
  // pairwise distinct decisions on run 0
  std::vector<const RunTrace*> run0;
  for (const RunResult& r : res.runs) {
    if (r.run == 0) run0.push_back(&r.trace);
  }
  auto same = [](const RunTrace& a, const RunTrace& b) {
    for (std::size_t i = 0; i < a.records.size() && i < b.records.size(); ++i) {
      if (a.records[i].x != b.records[i].x || a.records[i].inner_steps != b.records[i].inner_steps) return false;
    }
    return a.final_x == b.final_x;
  };
  for (std::size_t i = 0; i < run0.size(); ++i) {
    for (std::size_t j = i + 1; j < run0.size(); ++j) {
      o.require(!same(*run0[i], *run0[j]),
                fmt::format("{} and {} made identical decisions", run0[i]->policy, run0[j]->policy));
    }
  }
  if (o.pass) {
    o.detail = fmt::format("{} variants x 2 runs on the d = 25 suite, each exactly 60 evaluations with pairwise "
                           "distinct decisions",
                           cfg.policies.size());
  }
  return o;
}

GpPosterior quadratic_gp(const Vector& x0, const Vector& c, double spacing) {
  Dataset data(2, 64);
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      Vector x = x0;
      x(0) += i * spacing;
      x(1) += j * spacing;
      data.append(x, (x - c).squaredNorm());
    }
  }
  return GpPosterior(data, KernelParams{Vector::Constant(2, 0.5), 1.0, 0.0});
}

Outcome criterion_7() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(707);

  // scaling invariance and the 0.5 floor
  double scale_err = 0.0, min_prob = 1.0;
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index d = 1 + t % 8;
    const GradientBelief b = random_belief(d, rng);
    const Vector v = oracle::standard_normal(d, rng);
    const double p = descent_probability(b, v);
    for (double s : {1e-6, 0.37, 5.0, 1e8}) scale_err = std::max(scale_err, std::abs(descent_probability(b, s * v) - p));
    min_prob = std::min({min_prob, max_descent_probability(b),
                         max_descent_probability(GradientBelief(Vector::Zero(d), b.cov()))});
  }
  o.require(scale_err <= 1e-12, fmt::format("scaling changes descent probability by {:.3g}", scale_err));
  o.require(min_prob >= 0.5, fmt::format("max descent probability {:.6f} < 0.5", min_prob));

  // Sigma_x - Sigma_{x|Z} is PSD; batch order does not matter
  double min_eig = 0.0, perm_err = 0.0;
  for (int t = 0; t < 30; ++t) {
    const Instance inst = random_instance(2 + t % 4, 10, rng);
    const GpPosterior gp(inst.data, inst.params);
    const int q = 1 + t % 4;
    const Batch z = near_batch(inst.x, q, rng);
    const Matrix diff = gradient_posterior(gp, inst.x).cov() - fantasy_gradient(gp, inst.x, z).sigma_cond;
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Matrix>(diff, Eigen::EigenvaluesOnly).eigenvalues()(0));
    Batch rev{z.points.colwise().reverse()};
    const double a = mpd_acquisition(gp, inst.x, z), b = mpd_acquisition(gp, inst.x, rev);
    perm_err = std::max(perm_err, std::abs(a - b) / std::max(1.0, std::abs(a)));
  }
  o.require(min_eig >= -1e-12, fmt::format("Sigma_x - Sigma_x|Z has eigenvalue {:.3g}", min_eig));
  o.require(perm_err <= 1e-12, fmt::format("batch permutation changes acquisition by {:.3g}", perm_err));

  // interior move-loop steps have length exactly delta
  Vector x0(2), c(2);
  x0 << 0.3, 0.3;
  c << 0.7, 0.6;
  const GpPosterior gp = quadratic_gp(x0, c, 0.02);
  MoveConfig mc;
  mc.bounds = Box::unit(2);
  mc.step = 1e-3;
  mc.max_inner_steps = 1;
  Vector x = x0;
  double step_err = 0.0;
  int interior = 0;
  for (int k = 0; k < 200; ++k) {
    const MoveResult r = move_loop(gp, x, mc);
    if (r.inner_steps == 0) break;
    if ((r.x.array() > 0.0).all() && (r.x.array() < 1.0).all()) {
      step_err = std::max(step_err, std::abs((r.x - x).norm() - mc.step));
      ++interior;
    }
    x = r.x;
  }
  o.require(interior > 0 && step_err <= 1e-12, fmt::format("{} interior steps, length error {:.3g}", interior, step_err));

  // budget exactness and bit-identical reruns
  const Eigen::Index d = 5;
  const double ls = 2.0 * default_rff_lengthscale(d);
  const KernelParams truth{Vector::Constant(d, ls), 1.0, 1e-4};
  int budget_runs = 0;
  for (int budget : {1, 2, 7, 25}) {
    for (PolicyConfig pc : {PolicyConfig::mpd(), PolicyConfig::gibo(), PolicyConfig::ars_default()}) {
      pc.budget = budget;
      pc.seed = 5;
      pc.noise_seed = 6;
      pc.gp.priors = HyperPriors::all_fixed(truth);
      pc.gp.init = truth;
      auto f1 = make_rff_objective(d, ls, 1.0, 512, 9, 0.01, Sense::kMaximize);
      auto f2 = make_rff_objective(d, ls, 1.0, 512, 9, 0.01, Sense::kMaximize);
      const RunTrace a = run_policy(*f1, Vector::Constant(d, 0.4), pc);
      const RunTrace b = run_policy(*f2, Vector::Constant(d, 0.4), pc);
      o.require(a.evaluations() == static_cast<std::size_t>(budget),
                fmt::format("{} with budget {} used {} evaluations", to_string(pc.kind), budget, a.evaluations()));
      bool identical = a.evaluations() == b.evaluations() && a.final_x == b.final_x;
      for (std::size_t i = 0; identical && i < a.records.size(); ++i) {
        identical = a.records[i].x == b.records[i].x && a.records[i].y == b.records[i].y;
      }
      o.require(identical, fmt::format("{} rerun with budget {} is not bit-identical", to_string(pc.kind), budget));
      ++budget_runs;
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 600.0, fmt::format("took {:.1f} s", secs));
  if (o.pass) {
    o.detail = fmt::format("scaling {:.1g}, min p {:.3f}, min eig {:.1g}, permutation {:.1g}, {} interior steps "
                           "(error {:.1g}), {} budget/rerun pairs, {:.1f} s",
                           scale_err, min_prob, min_eig, perm_err, interior, step_err, budget_runs, secs);
  }
  return o;
}

ExternalConfig demo(const std::string& name, double timeout = 10.0) {
  return ExternalConfig{{MPD_CLI_PATH, "serve-objective", "--demo", name}, timeout};
}

class KillMidRun : public Objective {
 public:
  KillMidRun(ExternalObjective& inner, int kill_at)
      : Objective("kill-mid-run", inner.box(), 0.0), inner_(inner), kill_at_(kill_at) {}
  double value(const Vector& x) override {
    if (calls_++ == kill_at_) ::kill(inner_.pid(), SIGKILL);
    return inner_.value(x);
  }

 private:
  ExternalObjective& inner_;
  int kill_at_;
  int calls_ = 0;
};

Outcome criterion_8() {
  Outcome o;
  {
    ExternalObjective f(demo("quadratic"), Box::unit(3));
    int errors = 0;
    double max_err = 0.0;
    std::mt19937_64 rng(808);
    for (int i = 0; i < 1000; ++i) {
      const Vector x = oracle::random_vector(3, rng);
      try {
        max_err = std::max(max_err, std::abs(f.value(x) - (x.array() - 0.3).square().sum()));
      } catch (const EvaluationError&) {
        ++errors;
      }
    }
    o.require(errors == 0 && max_err < 1e-12 && f.spawn_count() == 1,
              fmt::format("{} protocol errors, value error {:.3g}, {} spawns", errors, max_err, f.spawn_count()));
  }
  {
    ExternalObjective inner(demo("quadratic"), Box::unit(2));
    KillMidRun f(inner, 6);
    PolicyConfig pc = PolicyConfig::mpd();
    pc.budget = 20;
    const RunTrace t = run_mpd(f, Vector::Constant(2, 0.6), pc);
    o.require(t.aborted && t.evaluations() == 6 && t.abort_reason.find("external objective") != std::string::npos,
              fmt::format("kill: aborted={} evaluations={} reason='{}'", t.aborted, t.evaluations(), t.abort_reason));
  }
  {
    ExternalObjective f(demo("hang", 0.3), Box::unit(2));
    bool timed_out = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      f.value(Vector::Constant(2, 0.5));
    } catch (const EvaluationError&) {
      timed_out = true;
    }
    const double waited = seconds_since(t0);
    try {
      f.value(Vector::Constant(2, 0.5));
    } catch (const EvaluationError&) {
    }
    o.require(timed_out && waited >= 0.3 && waited < 5.0 && f.spawn_count() == 2,
              fmt::format("timeout: raised={} after {:.2f} s, spawns {}", timed_out, waited, f.spawn_count()));
  }
  {
    ExternalObjective f(demo("malformed"), Box::unit(2));
    int raised = 0;
    for (int i = 0; i < 2; ++i) {
      try {
        f.value(Vector::Constant(2, 0.5));
      } catch (const EvaluationError&) {
        ++raised;
      }
    }
    o.require(raised == 2 && f.spawn_count() == 1,
              fmt::format("malformed: {} errors, {} spawns", raised, f.spawn_count()));
  }
  if (o.pass) {
    o.detail = "1000 round trips without errors; kill aborts with a partial trace; timeout kills and respawns; "
               "malformed lines raise evaluation errors";
  }
  return o;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"most probable direction vs random directions", criterion_1},
      {"polar examples", criterion_2},
      {"acquisition closed form", criterion_3},
      {"derivatives vs finite differences", criterion_4},
      {"d = 25 synthetic trend", criterion_5},
      {"ablation variants", criterion_6},
      {"invariants", criterion_7},
      {"external protocol", criterion_8},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = fmt::format("exception: {}", e.what());
    }
    if (!o.pass) ++failed;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(fs::temp_directory_path() / ("mpd_acceptance_" + std::to_string(::getpid())));
  return failed == 0 ? 0 : 1;
}
