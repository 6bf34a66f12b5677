#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mpd/config.hpp"

namespace mpd {

struct RunResult {
  std::string policy;
  int run = 0;
  std::uint64_t seed = 0;
  std::uint64_t noise_seed = 0;
  RunTrace trace;
  /// Set when the run aborted or threw before producing a trace.
  bool failed = false;
  std::string failure;
};

struct ExperimentResult {
  std::filesystem::path dir;
  std::string config_hash;
  Matrix starts;  // runs x dim
  std::vector<RunResult> runs;
  int failures = 0;
};

/// Runs every (policy, run) pair and writes, under `dir`:
///   traces/<policy>_run<i>.csv, progress_<policy>.csv, summary.csv,
///   summary.txt and manifest.json.
/// Run i of every policy starts from the same Sobol point. Only the calling
/// thread writes files. Failed runs are recorded and the rest proceed.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Per-run seeds derived from the experiment seed.
std::uint64_t run_policy_seed(std::uint64_t experiment_seed, int run);
std::uint64_t run_noise_seed(std::uint64_t experiment_seed, int run);

/// One parsed trace file.
struct TraceFile {
  std::filesystem::path path;
  std::string policy;
  int run = -1;
  std::string objective;
  Sense sense = Sense::kMinimize;
  std::string x0_json;
  std::string status;
  std::vector<double> y;       // reported sense
  std::vector<double> best_y;  // reported sense

  bool ok() const { return status == "ok"; }
};

/// Throws std::runtime_error describing the first problem found.
TraceFile read_trace(const std::filesystem::path& path);

struct SummaryRow {
  std::string policy;
  std::string objective;
  double mean = 0.0;
  /// Sample standard deviation over sqrt(runs); 0 for a single run.
  double stderr_ = 0.0;
  std::vector<int> run_ids;
  std::vector<double> terminal;  // best reported value per run
};

struct Summary {
  std::vector<SummaryRow> rows;
  /// Missing, corrupt or failed traces, each excluded from the rows.
  std::vector<std::string> problems;
};

/// Recomputes everything from the trace files. If a manifest is present the
/// expected (policy, run) set is taken from it so missing traces are named.
Summary summarize(const std::filesystem::path& dir);

std::string summary_csv(const Summary& s);
std::string summary_text(const Summary& s);

/// Progressive best-so-far per evaluation index over the successful runs of
/// one policy: eval_index,mean,stderr,run<i>...
std::string progress_csv(const std::vector<TraceFile>& runs);

/// eval_index,<policy>_mean,<policy>_stderr,... for every policy in `dir`.
std::string bench_figure_csv(const std::filesystem::path& dir);

}  // namespace mpd
