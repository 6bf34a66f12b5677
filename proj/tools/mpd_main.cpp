#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mpd/experiment.hpp"
#include "mpd/external.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRunFailure = 1;
constexpr int kConfigError = 2;

void setup_logging() {
  // stdout is reserved for results and for the serve-objective protocol
  auto logger = spdlog::stderr_color_mt("mpd");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  if (const char* level = std::getenv("MPD_LOG")) {
    spdlog::set_level(spdlog::level::from_str(level));
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

int cmd_run(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed,
            std::optional<int> parallel) {
  mpd::ExperimentConfig cfg;
  try {
    cfg = mpd::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (parallel) cfg.parallel = *parallel;
    if (!out.empty()) cfg.output_dir = out;
    cfg.validate();
  } catch (const mpd::ConfigError& e) {
    spdlog::error("{}: {}", config_path, e.what());
    return kConfigError;
  }
  const mpd::ExperimentResult res = mpd::run_experiment(cfg, cfg.output_dir);
  std::cout << mpd::summary_text(mpd::summarize(res.dir));
  if (res.failures > 0) {
    spdlog::error("{} of {} runs failed; see {}", res.failures, res.runs.size(),
                  (res.dir / "manifest.json").string());
    return kRunFailure;
  }
  return kOk;
}

int cmd_summarize(const std::string& dir, const std::string& format) {
  const mpd::Summary s = mpd::summarize(dir);
  for (const auto& p : s.problems) spdlog::warn("excluded: {}", p);
  std::cout << (format == "csv" ? mpd::summary_csv(s) : mpd::summary_text(s));
  return kOk;
}

int cmd_bench_figure(const std::string& dir, const std::string& out) {
  const std::string csv = mpd::bench_figure_csv(dir);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f || !(f << csv) || !f.flush()) {
    spdlog::error("cannot write '{}'", out);
    return kRunFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Local Bayesian optimization by most probable descent"};
  app.require_subcommand(1);

  std::string config_path, out_dir, in_dir, format = "text", figure_out, demo;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallel;
  int crash_after = 2;

  auto* run = app.add_subcommand("run", "Run an experiment described by a TOML or JSON config");
  run->add_option("--config", config_path, "Experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  run->add_option("--seed", seed, "Start-point seed (overrides seed)");
  run->add_option("--parallel", parallel, "Concurrent runs; 0 uses every core")->check(CLI::NonNegativeNumber);

  auto* summarize = app.add_subcommand("summarize", "Recompute the summary table from traces");
  summarize->add_option("--in", in_dir, "Results directory")->required()->check(CLI::ExistingDirectory);
  summarize->add_option("--format", format, "csv or text")->check(CLI::IsMember({"csv", "text"}));

  auto* figure = app.add_subcommand("bench-figure", "Write progressive mean best values per policy");
  figure->add_option("--in", in_dir, "Results directory")->required()->check(CLI::ExistingDirectory);
  figure->add_option("--out", figure_out, "Output CSV")->required();

  auto* serve = app.add_subcommand("serve-objective", "Serve a demo objective over stdin/stdout");
  serve->add_option("--demo", demo, "Server name")->required()->check(CLI::IsMember(mpd::demo_server_names()));
  serve->add_option("--crash-after", crash_after, "Evaluations answered before the crash server exits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir, seed, parallel);
    if (*summarize) return cmd_summarize(in_dir, format);
    if (*figure) return cmd_bench_figure(in_dir, figure_out);
    if (*serve) return mpd::run_demo_server(demo, std::cin, std::cout, crash_after);
  } catch (const mpd::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRunFailure;
  }
  return kOk;
}
