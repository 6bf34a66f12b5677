#include "mpd/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <toml.hpp>

#include "mpd/external.hpp"

namespace mpd {

using json = nlohmann::json;

std::string ObjectiveSpec::label() const {
  if (kind == "analytic") return name;
  if (kind == "rff") return fmt::format("rff-d{}", dim);
  return "external";
}

std::unique_ptr<Objective> make_objective(const ObjectiveSpec& spec, int run) {
  if (spec.kind == "rff") {
    const std::uint64_t seed = spec.resample_per_run ? spec.seed + static_cast<std::uint64_t>(run) : spec.seed;
    return std::make_unique<RffObjective>(Vector::Constant(spec.dim, spec.lengthscale), spec.outputscale,
                                          spec.features, seed, spec.noise_std, spec.sense, spec.box);
  }
  if (spec.kind == "analytic") {
    const Vector center = spec.box.lower + 0.3 * spec.box.width();
    if (spec.name == "quadratic") return std::make_unique<QuadraticObjective>(center, spec.box, spec.noise_std);
    if (spec.name == "ridge") {
      return std::make_unique<RidgeObjective>(center, Vector::LinSpaced(spec.dim, 1.0, 2.0), spec.box,
                                              spec.noise_std);
    }
    if (spec.name == "linear") {
      Vector a(spec.dim);
      for (int k = 0; k < spec.dim; ++k) a(k) = k % 2 == 0 ? 1.0 : -1.0;
      return std::make_unique<LinearObjective>(a, spec.box, spec.noise_std, spec.sense);
    }
    throw ConfigError(fmt::format("objective.name: unknown analytic objective '{}'", spec.name));
  }
  if (spec.kind == "external") {
    return std::make_unique<ExternalObjective>(ExternalConfig{spec.command, spec.timeout}, spec.box,
                                               spec.noise_std, spec.sense);
  }
  throw ConfigError(fmt::format("objective.kind: unknown kind '{}'", spec.kind));
}

// ---------------------------------------------------------------------------
// Strict reading

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(fmt::format("{}: expected a table", where()));
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const char* key, double def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(fmt::format("{}: expected a number", field(key)));
    return v.get<double>();
  }

  std::int64_t integer(const char* key, std::int64_t def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(fmt::format("{}: expected an integer", field(key)));
    return v.get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const char* key, std::uint64_t def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(fmt::format("{}: expected a non-negative integer", field(key)));
    return v.get<std::uint64_t>();
  }

  bool boolean(const char* key, bool def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(fmt::format("{}: expected true or false", field(key)));
    return v.get<bool>();
  }

  std::string string(const char* key, const std::string& def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(fmt::format("{}: expected a string", field(key)));
    return v.get<std::string>();
  }

  std::string required_string(const char* key) {
    if (!has(key)) throw ConfigError(fmt::format("{}: required", field(key)));
    return string(key, "");
  }

  std::vector<std::string> strings(const char* key) {
    if (!has(key)) return {};
    const json& v = raw(key);
    if (!v.is_array()) throw ConfigError(fmt::format("{}: expected an array of strings", field(key)));
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError(fmt::format("{}: expected an array of strings", field(key)));
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  /// Scalar broadcast to `dim` entries, or an array of exactly `dim` numbers.
  Vector vector_or_scalar(const char* key, double def, int dim) {
    if (!has(key)) return Vector::Constant(dim, def);
    const json& v = raw(key);
    if (v.is_number()) return Vector::Constant(dim, v.get<double>());
    if (!v.is_array() || static_cast<int>(v.size()) != dim)
      throw ConfigError(fmt::format("{}: expected a number or an array of {} numbers", field(key), dim));
    Vector out(dim);
    for (int i = 0; i < dim; ++i) {
      if (!v[i].is_number()) throw ConfigError(fmt::format("{}[{}]: expected a number", field(key), i));
      out(i) = v[i].get<double>();
    }
    return out;
  }

  Reader child(const char* key) { return Reader(raw(key), field(key)); }

  /// Fails early on keys outside `keys`, before any required-field errors.
  void known(std::initializer_list<const char*> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
        throw ConfigError(fmt::format("{}: unknown key", field(it.key().c_str())));
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(fmt::format("{}: unknown key", field(it.key().c_str())));
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json o = json::object();
    for (const auto& [k, v] : *t) o[std::string(k.str())] = toml_to_json(v);
    return o;
  }
  if (const auto* a = node.as_array()) {
    json arr = json::array();
    for (const auto& v : *a) arr.push_back(toml_to_json(v));
    return arr;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  const auto& src = node.source();
  throw ConfigError(fmt::format("line {}, column {}: dates and times are not supported", src.begin.line,
                                src.begin.column));
}

HyperPrior read_prior(Reader r, const HyperPrior& def) {
  const std::string kind = r.string("prior", "");
  HyperPrior p = def;
  if (kind.empty()) {
    if (r.has("lo") || r.has("hi") || r.has("mean") || r.has("sd") || r.has("value"))
      throw ConfigError(fmt::format("{}: required when parameters are given", r.field("prior")));
  } else if (kind == "uniform") {
    p = HyperPrior::uniform(r.number("lo", 0.0), r.number("hi", 0.0));
  } else if (kind == "normal") {
    p = HyperPrior::normal(r.number("mean", 0.0), r.number("sd", 0.0));
  } else if (kind == "fixed") {
    p = HyperPrior::fixed(r.number("value", 0.0));
  } else {
    throw ConfigError(fmt::format("{}: unknown prior '{}' (uniform, normal, fixed)", r.field("prior"), kind));
  }
  r.finish();
  return p;
}

json prior_to_json(const HyperPrior& p) {
  switch (p.kind) {
    case HyperPrior::Kind::kUniform: return {{"prior", "uniform"}, {"lo", p.a}, {"hi", p.b}};
    case HyperPrior::Kind::kNormal: return {{"prior", "normal"}, {"mean", p.a}, {"sd", p.b}};
    case HyperPrior::Kind::kFixed: return {{"prior", "fixed"}, {"value", p.a}};
  }
  return {};
}

GpSettings read_gp(Reader r, GpSettings gp) {
  const std::int64_t window = r.integer("window", static_cast<std::int64_t>(gp.window));
  if (window < 1) throw ConfigError(fmt::format("{}: must be >= 1", r.field("window")));
  gp.window = static_cast<std::size_t>(window);
  gp.refit = r.boolean("refit", gp.refit);
  gp.refit_every = static_cast<int>(r.integer("refit_every", gp.refit_every));
  gp.fit.restarts = static_cast<int>(r.integer("fit_restarts", gp.fit.restarts));
  gp.fit.max_iterations = static_cast<int>(r.integer("fit_iterations", gp.fit.max_iterations));
  if (r.has("lengthscale")) gp.priors.lengthscale = read_prior(r.child("lengthscale"), gp.priors.lengthscale);
  if (r.has("outputscale")) gp.priors.outputscale = read_prior(r.child("outputscale"), gp.priors.outputscale);
  if (r.has("noise_var")) gp.priors.noise_var = read_prior(r.child("noise_var"), gp.priors.noise_var);
  if (r.has("init")) {
    Reader i = r.child("init");
    gp.init.lengthscales = Vector::Constant(1, i.number("lengthscale", gp.init.lengthscales(0)));
    gp.init.outputscale = i.number("outputscale", gp.init.outputscale);
    gp.init.noise_var = i.number("noise_var", gp.init.noise_var);
    i.finish();
  }
  r.finish();
  return gp;
}

json gp_to_json(const GpSettings& gp) {
  return {{"window", gp.window},
          {"refit", gp.refit},
          {"refit_every", gp.refit_every},
          {"fit_restarts", gp.fit.restarts},
          {"fit_iterations", gp.fit.max_iterations},
          {"lengthscale", prior_to_json(gp.priors.lengthscale)},
          {"outputscale", prior_to_json(gp.priors.outputscale)},
          {"noise_var", prior_to_json(gp.priors.noise_var)},
          {"init",
           {{"lengthscale", gp.init.lengthscales(0)},
            {"outputscale", gp.init.outputscale},
            {"noise_var", gp.init.noise_var}}}};
}

ObjectiveSpec read_objective(Reader r) {
  ObjectiveSpec s;
  s.kind = r.required_string("kind");
  if (s.kind != "rff" && s.kind != "analytic" && s.kind != "external")
    throw ConfigError(fmt::format("objective.kind: unknown kind '{}' (rff, analytic, external)", s.kind));
  s.dim = static_cast<int>(r.integer("dim", 0));
  if (s.dim < 1) throw ConfigError("objective.dim: required and must be >= 1");
  const std::string sense = r.string("sense", "minimize");
  if (sense != "minimize" && sense != "maximize")
    throw ConfigError(fmt::format("objective.sense: expected minimize or maximize, got '{}'", sense));
  s.sense = sense == "maximize" ? Sense::kMaximize : Sense::kMinimize;
  s.noise_std = r.number("noise_std", 0.0);
  if (!(s.noise_std >= 0.0)) throw ConfigError("objective.noise_std: must be >= 0");
  s.box = Box{r.vector_or_scalar("lower", 0.0, s.dim), r.vector_or_scalar("upper", 1.0, s.dim)};
  try {
    s.box.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("objective.lower/upper: {}", e.what()));
  }
  if (s.kind == "rff") {
    s.lengthscale = r.number("lengthscale", default_rff_lengthscale(s.dim));
    s.outputscale = r.number("outputscale", 1.0);
    s.features = static_cast<int>(r.integer("features", 1024));
    s.seed = r.unsigned_integer("seed", 0);
    s.resample_per_run = r.boolean("resample_per_run", true);
    if (!(s.lengthscale > 0.0)) throw ConfigError("objective.lengthscale: must be > 0");
    if (!(s.outputscale > 0.0)) throw ConfigError("objective.outputscale: must be > 0");
    if (s.features < 1) throw ConfigError("objective.features: must be >= 1");
  } else if (s.kind == "analytic") {
    s.name = r.required_string("name");
    if (s.name != "quadratic" && s.name != "linear" && s.name != "ridge")
      throw ConfigError(fmt::format("objective.name: unknown analytic objective '{}' (quadratic, linear, ridge)", s.name));
  } else {
    s.command = r.strings("command");
    if (s.command.empty()) throw ConfigError("objective.command: required non-empty array");
    s.timeout = r.number("timeout", 60.0);
    if (!(s.timeout > 0.0)) throw ConfigError("objective.timeout: must be > 0");
  }
  r.finish();
  return s;
}

json objective_to_json(const ObjectiveSpec& s) {
  json j{{"kind", s.kind},
         {"dim", s.dim},
         {"sense", s.sense == Sense::kMaximize ? "maximize" : "minimize"},
         {"noise_std", s.noise_std},
         {"lower", std::vector<double>(s.box.lower.data(), s.box.lower.data() + s.box.lower.size())},
         {"upper", std::vector<double>(s.box.upper.data(), s.box.upper.data() + s.box.upper.size())}};
  if (s.kind == "rff") {
    j["lengthscale"] = s.lengthscale;
    j["outputscale"] = s.outputscale;
    j["features"] = s.features;
    j["seed"] = s.seed;
    j["resample_per_run"] = s.resample_per_run;
  } else if (s.kind == "analytic") {
    j["name"] = s.name;
  } else {
    j["command"] = s.command;
    j["timeout"] = s.timeout;
  }
  return j;
}

NamedPolicy read_policy(Reader r, const GpSettings& shared) {
  NamedPolicy p;
  p.name = r.required_string("name");
  const PolicyKind kind = parse_policy_kind(r.required_string("kind"));
  PolicyConfig c = kind == PolicyKind::kMpd    ? PolicyConfig::mpd()
                   : kind == PolicyKind::kGibo ? PolicyConfig::gibo()
                   : kind == PolicyKind::kArs  ? PolicyConfig::ars_default()
                                               : PolicyConfig::variant(LearnRule::kMpdAcq, MoveRule::kMpdDirection);
  if (r.has("learn")) c.learn = parse_learn_rule(r.string("learn", ""));
  if (r.has("move")) c.move = parse_move_rule(r.string("move", ""));
  c.queries_per_iteration = static_cast<int>(r.integer("queries_per_iteration", c.queries_per_iteration));
  c.step = r.number("step", c.step);
  c.threshold = r.number("threshold", c.threshold);
  c.max_inner_steps = static_cast<int>(r.integer("max_inner_steps", c.max_inner_steps));
  c.gradient_step = r.number("gradient_step", c.gradient_step);
  c.acq_restarts = static_cast<int>(r.integer("acq_restarts", c.acq_restarts));
  c.acq_iterations = static_cast<int>(r.integer("acq_iterations", c.acq_iterations));
  c.acq_region_scale = r.number("acq_region_scale", c.acq_region_scale);
  c.max_consecutive_failures = static_cast<int>(r.integer("max_consecutive_failures", c.max_consecutive_failures));
  if (r.has("ars")) {
    Reader a = r.child("ars");
    c.ars.directions = static_cast<int>(a.integer("directions", c.ars.directions));
    c.ars.perturbation = a.number("perturbation", c.ars.perturbation);
    c.ars.step = a.number("step", c.ars.step);
    c.ars.elites = static_cast<int>(a.integer("elites", c.ars.elites));
    a.finish();
  }
  c.gp = r.has("gp") ? read_gp(r.child("gp"), shared) : shared;
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("policy '{}': {}", p.name, e.what()));
  }
  p.config = c;
  return p;
}

json policy_to_json(const NamedPolicy& p) {
  const PolicyConfig& c = p.config;
  return {{"name", p.name},
          {"kind", to_string(c.kind)},
          {"learn", to_string(c.learn)},
          {"move", to_string(c.move)},
          {"queries_per_iteration", c.queries_per_iteration},
          {"step", c.step},
          {"threshold", c.threshold},
          {"max_inner_steps", c.max_inner_steps},
          {"gradient_step", c.gradient_step},
          {"acq_restarts", c.acq_restarts},
          {"acq_iterations", c.acq_iterations},
          {"acq_region_scale", c.acq_region_scale},
          {"max_consecutive_failures", c.max_consecutive_failures},
          {"ars",
           {{"directions", c.ars.directions},
            {"perturbation", c.ars.perturbation},
            {"step", c.ars.step},
            {"elites", c.ars.elites}}},
          {"gp", gp_to_json(c.gp)}};
}

ExperimentConfig from_json(const json& root) {
  Reader r(root, "");
  r.known({"name", "budget", "runs", "seed", "output_dir", "parallel", "objective", "gp", "policies"});
  ExperimentConfig cfg;
  cfg.name = r.string("name", cfg.name);
  cfg.budget = static_cast<int>(r.integer("budget", cfg.budget));
  cfg.runs = static_cast<int>(r.integer("runs", cfg.runs));
  cfg.seed = r.unsigned_integer("seed", cfg.seed);
  cfg.output_dir = r.string("output_dir", cfg.output_dir);
  cfg.parallel = static_cast<int>(r.integer("parallel", cfg.parallel));
  if (!r.has("objective")) throw ConfigError("objective: required");
  cfg.objective = read_objective(r.child("objective"));
  const GpSettings shared = r.has("gp") ? read_gp(r.child("gp"), GpSettings{}) : GpSettings{};
  if (!r.has("policies")) throw ConfigError("policies: at least one policy is required");
  const json& list = r.raw("policies");
  if (!list.is_array()) throw ConfigError("policies: expected an array of tables");
  for (std::size_t i = 0; i < list.size(); ++i) {
    cfg.policies.push_back(read_policy(Reader(list[i], fmt::format("policies[{}]", i)), shared));
  }
  r.finish();
  cfg.validate();
  return cfg;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (budget < 1) throw ConfigError("budget: must be >= 1");
  if (runs < 1) throw ConfigError("runs: must be >= 1");
  if (parallel < 0) throw ConfigError("parallel: must be >= 0");
  if (policies.empty()) throw ConfigError("policies: at least one policy is required");
  std::set<std::string> names;
  for (const auto& p : policies) {
    if (p.name.empty()) throw ConfigError("policies: names must be non-empty");
    if (p.name.find_first_of("/\\ \t,") != std::string::npos)
      throw ConfigError(fmt::format("policies: name '{}' must not contain separators or spaces", p.name));
    if (!names.insert(p.name).second) throw ConfigError(fmt::format("policies: duplicate name '{}'", p.name));
  }
}

ExperimentConfig parse_config(const std::string& text, ConfigFormat format) {
  json root;
  if (format == ConfigFormat::kJson) {
    try {
      root = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(fmt::format("JSON syntax error: {}", e.what()));
    }
  } else {
    try {
      root = toml_to_json(toml::parse(text));
    } catch (const toml::parse_error& e) {
      const auto& src = e.source();
      throw ConfigError(fmt::format("TOML syntax error at line {}, column {}: {}", src.begin.line,
                                    src.begin.column, e.description()));
    }
  }
  return from_json(root);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.extension() == ".json" ? ConfigFormat::kJson : ConfigFormat::kToml);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  json policies = json::array();
  for (const auto& p : cfg.policies) policies.push_back(policy_to_json(p));
  return {{"name", cfg.name},       {"budget", cfg.budget},         {"runs", cfg.runs},
          {"seed", cfg.seed},       {"output_dir", cfg.output_dir}, {"parallel", cfg.parallel},
          {"objective", objective_to_json(cfg.objective)},           {"policies", policies}};
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("output_dir");
  j.erase("parallel");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace mpd
