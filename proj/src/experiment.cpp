#include "mpd/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <boost/version.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#ifndef MPD_VERSION
#define MPD_VERSION "0.0.0"
#endif

namespace mpd {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kTraceColumns = "eval_index,phase,x_json,y,best_y,max_descent_prob,acq_value,inner_steps";

std::string vector_json(const Vector& v) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += fmt::format("{}", v(i));
  }
  return out + "]";
}

std::string optional_number(double v) { return std::isnan(v) ? std::string() : fmt::format("{}", v); }

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

std::string trace_name(const std::string& policy, int run) { return fmt::format("{}_run{}.csv", policy, run); }

std::string sense_name(Sense s) { return s == Sense::kMaximize ? "maximize" : "minimize"; }

std::string run_status(const RunResult& r) { return r.failed ? "failed: " + one_line(r.failure) : "ok"; }

std::string trace_csv(const RunResult& r, const std::string& objective, Sense sense) {
  const double sign = sense == Sense::kMaximize ? -1.0 : 1.0;
  std::string out;
  out += fmt::format("# policy: {}\n", r.policy);
  out += fmt::format("# run: {}\n", r.run);
  out += fmt::format("# objective: {}\n", objective);
  out += fmt::format("# sense: {}\n", sense_name(sense));
  out += fmt::format("# x0: {}\n", vector_json(r.trace.x0));
  out += fmt::format("# status: {}\n", run_status(r));
  out += kTraceColumns;
  out += '\n';
  for (const TraceRecord& rec : r.trace.records) {
    out += fmt::format("{},{},\"{}\",{},{},{},{},{}\n", rec.eval_index, to_string(rec.phase), vector_json(rec.x),
                       sign * rec.y, sign * rec.best_y, optional_number(rec.max_descent_prob),
                       optional_number(rec.acq_value), rec.inner_steps < 0 ? "" : std::to_string(rec.inner_steps));
  }
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out.flush()) throw std::runtime_error(fmt::format("write to '{}' failed", path.string()));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw std::runtime_error("unterminated quote");
  return fields;
}

double parse_double(const std::string& s, const char* what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw std::runtime_error(fmt::format("bad {} value '{}'", what, s));
  return v;
}

void clear_outputs(const fs::path& dir) {
  const fs::path traces = dir / "traces";
  if (fs::is_directory(traces)) {
    for (const auto& e : fs::directory_iterator(traces)) {
      if (e.path().extension() == ".csv") fs::remove(e.path());
    }
  }
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("progress_", 0) == 0 && e.path().extension() == ".csv") fs::remove(e.path());
    }
  }
  for (const char* name : {"summary.csv", "summary.txt", "manifest.json"}) fs::remove(dir / name);
}

json versions_json() {
  return {{"mpd", MPD_VERSION},
          {"compiler", __VERSION__},
          {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
          {"fmt", FMT_VERSION},
          {"spdlog", fmt::format("{}.{}.{}", SPDLOG_VER_MAJOR, SPDLOG_VER_MINOR, SPDLOG_VER_PATCH)},
          {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                        NLOHMANN_JSON_VERSION_PATCH)},
          {"boost", BOOST_LIB_VERSION}};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

RunResult execute(const ExperimentConfig& cfg, std::size_t p, int run, const Vector& x0) {
  RunResult r;
  r.policy = cfg.policies[p].name;
  r.run = run;
  r.seed = run_policy_seed(cfg.seed, run);
  r.noise_seed = run_noise_seed(cfg.seed, run);
  r.trace.policy = r.policy;
  r.trace.x0 = x0;
  r.trace.final_x = x0;
  try {
    PolicyConfig pc = cfg.policies[p].config;
    pc.budget = cfg.budget;
    pc.iterations = 0;
    pc.seed = r.seed;
    pc.noise_seed = r.noise_seed;
    auto objective = make_objective(cfg.objective, run);
    r.trace = run_policy(*objective, x0, pc);
    r.trace.policy = r.policy;
    if (r.trace.aborted) {
      r.failed = true;
      r.failure = r.trace.abort_reason;
    }
  } catch (const std::exception& e) {
    r.failed = true;
    r.failure = e.what();
  }
  return r;
}

struct TraceSlot {
  std::string policy;
  int run;
  fs::path path;
};

}  // namespace

std::uint64_t run_policy_seed(std::uint64_t experiment_seed, int run) {
  return counter_hash(experiment_seed, 2 * static_cast<std::uint64_t>(run));
}

std::uint64_t run_noise_seed(std::uint64_t experiment_seed, int run) {
  return counter_hash(experiment_seed, 2 * static_cast<std::uint64_t>(run) + 1);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const fs::path& dir) {
  cfg.validate();
  ExperimentResult res;
  res.dir = dir;
  res.config_hash = config_hash(cfg);
  res.starts = sobol_starts(cfg.objective.dim, cfg.runs, cfg.objective.box, cfg.seed);

  fs::create_directories(dir / "traces");
  clear_outputs(dir);

  struct Job {
    std::size_t policy;
    int run;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < cfg.policies.size(); ++p) {
    for (int i = 0; i < cfg.runs; ++i) jobs.push_back({p, i});
  }
  res.runs.resize(jobs.size());

  unsigned workers = cfg.parallel > 0 ? static_cast<unsigned>(cfg.parallel) : std::thread::hardware_concurrency();
  workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(jobs.size()));
  spdlog::info("experiment '{}' ({}): {} policies x {} runs, budget {}, {} worker(s)", cfg.name, res.config_hash,
               cfg.policies.size(), cfg.runs, cfg.budget, workers);

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::size_t> done;

  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Vector x0 = res.starts.row(jobs[j].run).transpose();
      RunResult r = execute(cfg, jobs[j].policy, jobs[j].run, x0);
      {
        std::lock_guard<std::mutex> lock(mu);
        res.runs[j] = std::move(r);
        done.push_back(j);
      }
      cv.notify_one();
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);

  const std::string objective = cfg.objective.label();
  for (std::size_t written = 0; written < jobs.size(); ++written) {
    std::size_t j;
    {
      std::unique_lock<std::mutex> lock(mu);
      cv.wait(lock, [&] { return !done.empty(); });
      j = done.front();
      done.pop_front();
    }
    const RunResult& r = res.runs[j];
    write_file(dir / "traces" / trace_name(r.policy, r.run), trace_csv(r, objective, cfg.objective.sense));
    if (r.failed) {
      spdlog::error("{} run {} failed after {} evaluations: {}", r.policy, r.run, r.trace.evaluations(), r.failure);
    } else {
      const double best = cfg.objective.sense == Sense::kMaximize ? -r.trace.best_y() : r.trace.best_y();
      spdlog::info("{} run {} done: {} evaluations, best {:.6g}", r.policy, r.run, r.trace.evaluations(), best);
    }
  }
  for (auto& t : pool) t.join();

  json runs = json::array();
  json failures = json::array();
  for (const RunResult& r : res.runs) {
    runs.push_back({{"policy", r.policy},
                    {"run", r.run},
                    {"seed", r.seed},
                    {"noise_seed", r.noise_seed},
                    {"objective_seed", cfg.objective.kind == "rff" && cfg.objective.resample_per_run
                                           ? cfg.objective.seed + static_cast<std::uint64_t>(r.run)
                                           : cfg.objective.seed},
                    {"trace", "traces/" + trace_name(r.policy, r.run)},
                    {"evaluations", r.trace.evaluations()},
                    {"status", run_status(r)}});
    if (r.failed) {
      ++res.failures;
      failures.push_back({{"policy", r.policy}, {"run", r.run}, {"reason", r.failure}});
    }
  }
  json starts = json::array();
  for (Eigen::Index i = 0; i < res.starts.rows(); ++i) {
    const Vector row = res.starts.row(i).transpose();
    starts.push_back(std::vector<double>(row.data(), row.data() + row.size()));
  }
  json manifest{{"name", cfg.name},
                {"config_hash", res.config_hash},
                {"config", config_to_json(cfg)},
                {"seed", cfg.seed},
                {"starts", starts},
                {"runs", runs},
                {"failures", failures},
                {"versions", versions_json()},
                {"created", fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr)))},
                {"budget_accounting",
                 "every successful objective evaluation counts toward the budget, including the observation at "
                 "the current iterate that opens each outer iteration; evaluation attempts that fail and are "
                 "retried do not count"}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  for (const NamedPolicy& p : cfg.policies) {
    std::vector<TraceFile> traces;
    for (int i = 0; i < cfg.runs; ++i) {
      try {
        traces.push_back(read_trace(dir / "traces" / trace_name(p.name, i)));
      } catch (const std::exception& e) {
        spdlog::warn("{}", e.what());
      }
    }
    write_file(dir / fmt::format("progress_{}.csv", p.name), progress_csv(traces));
  }

  const Summary s = summarize(dir);
  write_file(dir / "summary.csv", summary_csv(s));
  write_file(dir / "summary.txt", summary_text(s));
  return res;
}

TraceFile read_trace(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error(fmt::format("{}: missing trace", path.string()));
  TraceFile t;
  t.path = path;
  std::istringstream in(read_file(path));
  std::map<std::string, std::string> header;
  std::string line;
  std::size_t lineno = 0;
  bool columns = false;
  auto fail = [&](const std::string& why) {
    return std::runtime_error(fmt::format("{}:{}: corrupt trace: {}", path.string(), lineno, why));
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!columns && line.rfind("# ", 0) == 0) {
      const auto colon = line.find(": ");
      if (colon == std::string::npos) throw fail("malformed header line");
      header[line.substr(2, colon - 2)] = line.substr(colon + 2);
      continue;
    }
    if (!columns) {
      if (line != kTraceColumns) throw fail("unexpected column header");
      columns = true;
      continue;
    }
    std::vector<std::string> f;
    try {
      f = split_csv_row(line);
    } catch (const std::exception& e) {
      throw fail(e.what());
    }
    if (f.size() != 8) throw fail(fmt::format("expected 8 fields, found {}", f.size()));
    if (f[0] != std::to_string(t.y.size())) throw fail(fmt::format("eval_index '{}' out of sequence", f[0]));
    try {
      t.y.push_back(parse_double(f[3], "y"));
      t.best_y.push_back(parse_double(f[4], "best_y"));
    } catch (const std::exception& e) {
      throw fail(e.what());
    }
  }
  if (!columns) throw fail("no column header");
  for (const char* key : {"policy", "run", "objective", "sense", "x0", "status"}) {
    if (!header.count(key)) throw fail(fmt::format("missing header '{}'", key));
  }
  t.policy = header["policy"];
  t.objective = header["objective"];
  t.x0_json = header["x0"];
  t.status = header["status"];
  if (header["sense"] == "maximize") {
    t.sense = Sense::kMaximize;
  } else if (header["sense"] != "minimize") {
    throw fail("unknown sense");
  }
  const std::string& run = header["run"];
  const auto [ptr, ec] = std::from_chars(run.data(), run.data() + run.size(), t.run);
  if (ec != std::errc() || ptr != run.data() + run.size() || t.run < 0) throw fail("bad run index");
  if (t.ok() && t.y.empty()) throw fail("no evaluations");
  return t;
}

Summary summarize(const fs::path& dir) {
  Summary s;
  std::vector<TraceSlot> slots;
  const fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    json m;
    try {
      m = json::parse(read_file(manifest));
      for (const auto& r : m.at("runs")) {
        slots.push_back({r.at("policy").get<std::string>(), r.at("run").get<int>(),
                         dir / r.at("trace").get<std::string>()});
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("{}: unreadable manifest: {}", manifest.string(), e.what()));
    }
  } else {
    if (!fs::is_directory(dir / "traces"))
      throw std::runtime_error(fmt::format("{}: no manifest.json and no traces directory", dir.string()));
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir / "traces")) {
      if (e.path().extension() == ".csv") paths.push_back(e.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) slots.push_back({"", -1, p});
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<TraceFile>> by_policy;
  for (const TraceSlot& slot : slots) {
    TraceFile t;
    try {
      t = read_trace(slot.path);
    } catch (const std::exception& e) {
      s.problems.push_back(e.what());
      if (!slot.policy.empty() && !by_policy.count(slot.policy)) {
        order.push_back(slot.policy);
        by_policy[slot.policy];
      }
      continue;
    }
    if (!slot.policy.empty() && (t.policy != slot.policy || t.run != slot.run)) {
      s.problems.push_back(fmt::format("{}: header names {} run {}, expected {} run {}", slot.path.string(),
                                       t.policy, t.run, slot.policy, slot.run));
      continue;
    }
    if (!by_policy.count(t.policy)) order.push_back(t.policy);
    auto& list = by_policy[t.policy];
    if (!t.ok()) {
      s.problems.push_back(fmt::format("{}: run {} {}", t.path.string(), t.run, t.status));
      continue;
    }
    list.push_back(std::move(t));
  }

  for (const std::string& policy : order) {
    auto& list = by_policy[policy];
    std::sort(list.begin(), list.end(), [](const TraceFile& a, const TraceFile& b) { return a.run < b.run; });
    SummaryRow row;
    row.policy = policy;
    for (const TraceFile& t : list) {
      if (row.objective.empty()) row.objective = t.objective;
      row.run_ids.push_back(t.run);
      row.terminal.push_back(t.best_y.back());
    }
    if (row.terminal.empty()) {
      row.mean = std::numeric_limits<double>::quiet_NaN();
      row.stderr_ = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.mean = mean_of(row.terminal);
      row.stderr_ = stderr_of(row.terminal);
    }
    s.rows.push_back(std::move(row));
  }
  return s;
}

std::string summary_csv(const Summary& s) {
  std::string out = "policy,objective,runs,mean,stderr,terminal_values\n";
  for (const SummaryRow& r : s.rows) {
    std::string values = "[";
    for (std::size_t i = 0; i < r.terminal.size(); ++i) values += (i ? "," : "") + fmt::format("{}", r.terminal[i]);
    values += "]";
    out += fmt::format("{},{},{},{},{},\"{}\"\n", r.policy, r.objective, r.terminal.size(), optional_number(r.mean),
                       optional_number(r.stderr_), values);
  }
  return out;
}

std::string summary_text(const Summary& s) {
  std::vector<std::array<std::string, 5>> cells{{"policy", "objective", "runs", "mean", "stderr"}};
  for (const SummaryRow& r : s.rows) {
    const bool empty = r.terminal.empty();
    cells.push_back({r.policy, r.objective, std::to_string(r.terminal.size()),
                     empty ? "-" : fmt::format("{:.4f}", r.mean), empty ? "-" : fmt::format("{:.4f}", r.stderr_)});
  }
  std::array<std::size_t, 5> width{};
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < 5; ++c) {
      // text columns left-aligned, numbers right-aligned
      line += c < 2 ? fmt::format("{:<{}}", row[c], width[c]) : fmt::format("{:>{}}", row[c], width[c]);
      if (c < 4) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  if (!s.problems.empty()) {
    out += "\nexcluded:\n";
    for (const auto& p : s.problems) out += "  " + one_line(p) + "\n";
  }
  return out;
}

std::string progress_csv(const std::vector<TraceFile>& all) {
  std::vector<const TraceFile*> runs;
  for (const auto& t : all) {
    if (t.ok()) runs.push_back(&t);
  }
  std::string out = "eval_index,mean,stderr";
  std::size_t length = 0;
  for (const TraceFile* t : runs) {
    out += fmt::format(",run{}", t->run);
    length = std::max(length, t->best_y.size());
  }
  out += '\n';
  for (std::size_t i = 0; i < length; ++i) {
    std::vector<double> present;
    std::string cols;
    for (const TraceFile* t : runs) {
      cols += ',';
      if (i < t->best_y.size()) {
        present.push_back(t->best_y[i]);
        cols += fmt::format("{}", t->best_y[i]);
      }
    }
    out += fmt::format("{},{},{}{}\n", i, mean_of(present), stderr_of(present), cols);
  }
  return out;
}

std::string bench_figure_csv(const fs::path& dir) {
  const Summary s = summarize(dir);
  struct Column {
    std::string policy;
    std::vector<double> mean, se;
  };
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir / "traces")) {
    if (e.path().extension() == ".csv") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<TraceFile> all;
  for (const auto& p : paths) {
    try {
      all.push_back(read_trace(p));
    } catch (const std::exception&) {
      // already reported by summarize
    }
  }
  std::vector<Column> cols;
  std::size_t length = 0;
  for (const SummaryRow& row : s.rows) {
    Column c{row.policy, {}, {}};
    std::vector<TraceFile> traces;
    for (const auto& t : all) {
      if (t.policy == row.policy && t.ok()) traces.push_back(t);
    }
    std::sort(traces.begin(), traces.end(), [](const TraceFile& a, const TraceFile& b) { return a.run < b.run; });
    std::size_t n = 0;
    for (const auto& t : traces) n = std::max(n, t.best_y.size());
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> present;
      for (const auto& t : traces) {
        if (i < t.best_y.size()) present.push_back(t.best_y[i]);
      }
      c.mean.push_back(mean_of(present));
      c.se.push_back(stderr_of(present));
    }
    length = std::max(length, n);
    cols.push_back(std::move(c));
  }
  std::string out = "eval_index";
  for (const Column& c : cols) out += fmt::format(",{0}_mean,{0}_stderr", c.policy);
  out += '\n';
  for (std::size_t i = 0; i < length; ++i) {
    out += std::to_string(i);
    for (const Column& c : cols) {
      if (i < c.mean.size()) {
        out += fmt::format(",{},{}", c.mean[i], c.se[i]);
      } else {
        out += ",,";
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace mpd
