#pragma once

#include <sys/types.h>

#include <iosfwd>
#include <string>
#include <vector>

#include "mpd/objectives.hpp"

namespace mpd {

struct ExternalConfig {
  /// argv of the child process; argv[0] is looked up on PATH.
  std::vector<std::string> command;
  double timeout_seconds = 60.0;
};

/// Objective served by a child process speaking newline-delimited JSON on
/// its stdin/stdout:
///
///   -> {"type":"hello","dim":d}          <- {"type":"ready"}
///   -> {"type":"eval","id":n,"x":[...]}  <- {"type":"result","id":n,"y":v}
///                                        <- {"type":"error","id":n,"msg":"..."}
///   -> {"type":"bye"}
///
/// The child is spawned lazily on the first evaluation. Responses with a
/// stale id are skipped. A timeout kills the child and the next evaluation
/// starts a fresh one; a child that exits on its own stays dead and every
/// later evaluation fails. Failures surface as EvaluationError.
class ExternalObjective : public Objective {
 public:
  ExternalObjective(ExternalConfig cfg, Box box, double noise_std = 0.0,
                    Sense sense = Sense::kMinimize);
  ~ExternalObjective() override;

  double value(const Vector& x) override;

  /// Sends bye and reaps the child (killing it if it does not exit promptly).
  void shutdown();

  pid_t pid() const { return pid_; }
  int spawn_count() const { return spawns_; }

 private:
  void spawn();
  void kill_child();
  void reap(bool block);
  void send_line(const std::string& line);
  /// Returns false on timeout; throws on EOF.
  bool read_line(std::string& line, double seconds);

  ExternalConfig cfg_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 1;
  int spawns_ = 0;
  bool dead_ = false;
  std::string death_reason_;
};

/// Names accepted by run_demo_server.
std::vector<std::string> demo_server_names();

/// Test servers for the protocol:
///   sum        y = sum_i x_i
///   quadratic  y = ||x - 0.3||^2
///   malformed  answers every eval with a line that is not JSON
///   hang       never answers an eval
///   crash      answers `crash_after` evals, then exits with status 3
/// Returns the process exit status.
int run_demo_server(const std::string& name, std::istream& in, std::ostream& out,
                    int crash_after = 2);

}  // namespace mpd
