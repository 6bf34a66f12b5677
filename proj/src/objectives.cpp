#include "mpd/objectives.hpp"

#include <cmath>
#include <numbers>

#include <boost/random/sobol.hpp>
#include <fmt/format.h>

namespace mpd {

std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double counter_uniform(std::uint64_t seed, std::uint64_t counter) {
  return static_cast<double>(counter_hash(seed, counter) >> 11) * 0x1.0p-53;
}

double counter_normal(std::uint64_t seed, std::uint64_t index) {
  // 1 - u keeps the log argument in (0, 1]
  const double u1 = 1.0 - counter_uniform(seed, 2 * index);
  const double u2 = counter_uniform(seed, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Objective::Objective(std::string name, Box box, double noise_std, Sense sense)
    : name_(std::move(name)), box_(std::move(box)), noise_std_(noise_std), sense_(sense) {
  box_.validate();
  if (!(noise_std_ >= 0.0)) throw ConfigError(fmt::format("noise std {} must be >= 0", noise_std_));
}

double Objective::evaluate(const Vector& x, NoiseStream& noise) {
  require_dim(x.size(), dim(), "objective input");
  if (!box_.contains(x)) {
    throw DomainError(fmt::format("{}: input outside the domain box", name_));
  }
  double y = value(x);
  if (sense_ == Sense::kMaximize) y = -y;
  // draw even when noiseless so stream positions track evaluation indices
  const double z = noise.next();
  return noise_std_ > 0.0 ? y + noise_std_ * z : y;
}

// ---------------------------------------------------------------------------

namespace {

// independent counter streams per RFF component
constexpr std::uint64_t kStreamW = 1, kStreamB = 2, kStreamA = 3;

std::uint64_t substream(std::uint64_t seed, std::uint64_t id) { return counter_hash(seed, ~id); }

}  // namespace

RffObjective::RffObjective(Vector lengthscales, double outputscale, int features,
                           std::uint64_t seed, double noise_std, Sense sense, Box box)
    : Objective("rff", box.dim() == 0 ? Box::unit(lengthscales.size()) : std::move(box),
                noise_std, sense) {
  const Eigen::Index d = lengthscales.size();
  require_dim(this->box().dim(), d, "rff box");
  if (features < 1) throw ConfigError("rff feature count must be >= 1");
  if (!(outputscale > 0.0) || !(lengthscales.array() > 0.0).all()) {
    throw ConfigError("rff lengthscales and outputscale must be positive");
  }
  w_.resize(features, d);
  b_.resize(features);
  a_.resize(features);
  const std::uint64_t sw = substream(seed, kStreamW), sb = substream(seed, kStreamB),
                      sa = substream(seed, kStreamA);
  for (int i = 0; i < features; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      w_(i, k) = counter_normal(sw, static_cast<std::uint64_t>(i) * d + k) / lengthscales(k);
    }
    b_(i) = 2.0 * std::numbers::pi * counter_uniform(sb, i);
    a_(i) = counter_normal(sa, i);
  }
  scale_ = std::sqrt(outputscale) * std::sqrt(2.0 / features);
}

double RffObjective::value(const Vector& x) {
  require_dim(x.size(), dim(), "rff input");
  return scale_ * a_.dot(((w_ * x) + b_).array().cos().matrix());
}

Vector RffObjective::gradient(const Vector& x) const {
  require_dim(x.size(), dim(), "rff input");
  const Vector s = -(a_.array() * ((w_ * x) + b_).array().sin()).matrix();
  return scale_ * (w_.transpose() * s);
}

double default_rff_lengthscale(Eigen::Index d) { return 0.1 * std::sqrt(static_cast<double>(d)); }

std::unique_ptr<RffObjective> make_rff_objective(Eigen::Index d, double lengthscale,
                                                 double outputscale, int features,
                                                 std::uint64_t seed, double noise_std,
                                                 Sense sense) {
  if (d < 1) throw ConfigError("rff dimension must be >= 1");
  return std::make_unique<RffObjective>(Vector::Constant(d, lengthscale), outputscale, features,
                                        seed, noise_std, sense);
}

// ---------------------------------------------------------------------------

QuadraticObjective::QuadraticObjective(Vector center, Box box, double noise_std)
    : AnalyticObjective("quadratic", std::move(box), noise_std), center_(std::move(center)) {
  require_dim(center_.size(), dim(), "quadratic center");
}

double QuadraticObjective::value(const Vector& x) { return (x - center_).squaredNorm(); }

Vector QuadraticObjective::gradient(const Vector& x) const { return 2.0 * (x - center_); }

LinearObjective::LinearObjective(Vector slope, Box box, double noise_std, Sense sense)
    : AnalyticObjective("linear", std::move(box), noise_std, sense), slope_(std::move(slope)) {
  require_dim(slope_.size(), dim(), "linear slope");
}

double LinearObjective::value(const Vector& x) { return slope_.dot(x); }

Vector LinearObjective::minimizer() const {
  const double s = sense() == Sense::kMaximize ? -1.0 : 1.0;
  Vector v(dim());
  for (Eigen::Index k = 0; k < dim(); ++k) v(k) = s * slope_(k) > 0.0 ? box().lower(k) : box().upper(k);
  return v;
}

RidgeObjective::RidgeObjective(Vector center, Vector weights, Box box, double noise_std)
    : AnalyticObjective("ridge", std::move(box), noise_std),
      center_(std::move(center)),
      weights_(std::move(weights)) {
  require_dim(center_.size(), dim(), "ridge center");
  require_dim(weights_.size(), dim(), "ridge weights");
  if (!(weights_.array() > 0.0).all()) throw ConfigError("ridge weights must be positive");
}

double RidgeObjective::value(const Vector& x) {
  return weights_.dot((x - center_).cwiseAbs());
}

Vector RidgeObjective::gradient(const Vector& x) const {
  Vector g(dim());
  for (Eigen::Index k = 0; k < dim(); ++k) g(k) = x(k) >= center_(k) ? weights_(k) : -weights_(k);
  return g;
}

std::unique_ptr<AnalyticObjective> analytic_suite(const std::string& name, Eigen::Index d,
                                                  double noise_std) {
  if (d < 1) throw ConfigError("analytic objective dimension must be >= 1");
  const Box box = Box::unit(d);
  const Vector center = Vector::Constant(d, 0.3);
  if (name == "quadratic") return std::make_unique<QuadraticObjective>(center, box, noise_std);
  if (name == "linear") {
    Vector a(d);
    for (Eigen::Index k = 0; k < d; ++k) a(k) = k % 2 == 0 ? 1.0 : -1.0;
    return std::make_unique<LinearObjective>(a, box, noise_std);
  }
  if (name == "ridge") {
    return std::make_unique<RidgeObjective>(center, Vector::LinSpaced(d, 1.0, 2.0), box, noise_std);
  }
  throw ConfigError(fmt::format("unknown analytic objective '{}' (known: quadratic, linear, ridge)",
                                name));
}

// ---------------------------------------------------------------------------

Matrix sobol_starts(Eigen::Index d, Eigen::Index k, const Box& box, std::uint64_t seed) {
  if (k < 1) throw ConfigError("sobol_starts: count must be >= 1");
  if (d < 1) throw ConfigError("sobol_starts: dimension must be >= 1");
  box.validate();
  require_dim(box.dim(), d, "sobol_starts box");
  std::vector<std::uint64_t> shift(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) shift[j] = counter_hash(seed, static_cast<std::uint64_t>(j));

  // boost's engine skips the all-zero point; prepend it to keep net balance
  boost::random::sobol engine(static_cast<std::size_t>(d));
  Matrix out(k, d);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const std::uint64_t raw = i == 0 ? 0 : static_cast<std::uint64_t>(engine());
      const double u = static_cast<double>((raw ^ shift[j]) >> 11) * 0x1.0p-53;
      out(i, j) = box.lower(j) + u * (box.upper(j) - box.lower(j));
    }
  }
  return out;
}

}  // namespace mpd
