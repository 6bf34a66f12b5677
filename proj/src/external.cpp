#include "mpd/external.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <iostream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

namespace mpd {

using json = nlohmann::json;

namespace {

void ignore_sigpipe() {
  static const bool done = [] {
    signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

std::string describe_status(int status) {
  if (WIFEXITED(status)) return fmt::format("exited with status {}", WEXITSTATUS(status));
  if (WIFSIGNALED(status)) return fmt::format("killed by signal {}", WTERMSIG(status));
  return "stopped";
}

}  // namespace

ExternalObjective::ExternalObjective(ExternalConfig cfg, Box box, double noise_std, Sense sense)
    : Objective("external", std::move(box), noise_std, sense), cfg_(std::move(cfg)) {
  if (cfg_.command.empty()) throw ConfigError("external objective: empty command");
  if (!(cfg_.timeout_seconds > 0.0)) throw ConfigError("external objective: timeout must be > 0");
  ignore_sigpipe();
}

ExternalObjective::~ExternalObjective() { shutdown(); }

void ExternalObjective::spawn() {
  int in_pipe[2], out_pipe[2];
  if (pipe2(in_pipe, O_CLOEXEC) != 0) throw EvaluationError(fmt::format("pipe: {}", std::strerror(errno)));
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw EvaluationError(fmt::format("pipe: {}", std::strerror(errno)));
  }
  std::vector<char*> argv;
  for (auto& a : cfg_.command) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  const pid_t pid = fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    throw EvaluationError(fmt::format("fork: {}", std::strerror(errno)));
  }
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  buffer_.clear();
  ++spawns_;

  send_line(json{{"type", "hello"}, {"dim", dim()}}.dump());
  std::string line;
  if (!read_line(line, cfg_.timeout_seconds)) {
    kill_child();
    throw EvaluationError("external objective: no handshake reply before timeout");
  }
  json reply = json::parse(line, nullptr, false);
  if (reply.is_discarded() || !reply.is_object() || reply.value("type", "") != "ready") {
    kill_child();
    throw EvaluationError(fmt::format("external objective: bad handshake reply '{}'", line));
  }
}

void ExternalObjective::reap(bool block) {
  if (pid_ <= 0) return;
  int status = 0;
  const pid_t r = waitpid(pid_, &status, block ? 0 : WNOHANG);
  if (r == pid_) {
    death_reason_ = describe_status(status);
    pid_ = -1;
  }
}

void ExternalObjective::kill_child() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    kill(pid_, SIGKILL);
    reap(true);
  }
  buffer_.clear();
}

void ExternalObjective::shutdown() {
  if (pid_ > 0 && to_child_ >= 0) {
    const std::string bye = json{{"type", "bye"}}.dump() + "\n";
    [[maybe_unused]] ssize_t w = write(to_child_, bye.data(), bye.size());
    close(to_child_);
    to_child_ = -1;
    for (int i = 0; i < 100 && pid_ > 0; ++i) {
      reap(false);
      if (pid_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  kill_child();
}

void ExternalObjective::send_line(const std::string& line) {
  const std::string msg = line + "\n";
  std::size_t off = 0;
  while (off < msg.size()) {
    const ssize_t w = write(to_child_, msg.data() + off, msg.size() - off);
    if (w < 0) {
      if (errno == EINTR) continue;
      const std::string err = std::strerror(errno);
      reap(true);
      dead_ = true;
      kill_child();
      throw EvaluationError(fmt::format("external objective: write failed ({}); child {}", err,
                                        death_reason_));
    }
    off += static_cast<std::size_t>(w);
  }
}

bool ExternalObjective::read_line(std::string& line, double seconds) {
  using clock = std::chrono::steady_clock;
  const auto deadline =
      clock::now() + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(seconds));
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return true;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
    if (left.count() <= 0) return false;
    pollfd p{from_child_, POLLIN, 0};
    const int r = poll(&p, 1, static_cast<int>(left.count()));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw EvaluationError(fmt::format("external objective: poll failed: {}", std::strerror(errno)));
    }
    if (r == 0) return false;
    char chunk[4096];
    const ssize_t n = read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw EvaluationError(fmt::format("external objective: read failed: {}", std::strerror(errno)));
    }
    if (n == 0) {
      reap(true);
      dead_ = true;
      kill_child();
      throw EvaluationError(fmt::format("external objective: child {}", death_reason_));
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

double ExternalObjective::value(const Vector& x) {
  require_dim(x.size(), dim(), "external objective input");
  if (dead_) throw EvaluationError(fmt::format("external objective: child {}", death_reason_));
  if (pid_ <= 0) spawn();

  const std::uint64_t id = next_id_++;
  json req{{"type", "eval"}, {"id", id}, {"x", std::vector<double>(x.data(), x.data() + x.size())}};
  send_line(req.dump());

  std::string line;
  for (;;) {
    if (!read_line(line, cfg_.timeout_seconds)) {
      kill_child();
      throw EvaluationError(
          fmt::format("external objective: no response to eval {} within {} s", id, cfg_.timeout_seconds));
    }
    const json msg = json::parse(line, nullptr, false);
    if (msg.is_discarded() || !msg.is_object()) {
      throw EvaluationError(fmt::format("external objective: malformed response '{}'", line));
    }
    if (!msg.contains("id") || !msg["id"].is_number_unsigned() || msg["id"].get<std::uint64_t>() != id) {
      continue;  // stale or unsolicited
    }
    const std::string type = msg.value("type", "");
    if (type == "result") {
      if (!msg.contains("y") || !msg["y"].is_number()) {
        throw EvaluationError(fmt::format("external objective: result without numeric y: '{}'", line));
      }
      const double y = msg["y"].get<double>();
      if (!std::isfinite(y)) throw EvaluationError("external objective: non-finite y");
      return y;
    }
    if (type == "error") {
      throw EvaluationError(
          fmt::format("external objective: eval {} failed: {}", id, msg.value("msg", std::string("?"))));
    }
    throw EvaluationError(fmt::format("external objective: unexpected message '{}'", line));
  }
}

// ---------------------------------------------------------------------------

std::vector<std::string> demo_server_names() { return {"sum", "quadratic", "malformed", "hang", "crash"}; }

int run_demo_server(const std::string& name, std::istream& in, std::ostream& out, int crash_after) {
  const auto names = demo_server_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw ConfigError(fmt::format("unknown demo server '{}'", name));
  }
  int evals = 0;
  std::string line;
  while (std::getline(in, line)) {
    const json msg = json::parse(line, nullptr, false);
    if (msg.is_discarded() || !msg.is_object()) continue;
    const std::string type = msg.value("type", "");
    if (type == "hello") {
      out << json{{"type", "ready"}}.dump() << '\n' << std::flush;
    } else if (type == "bye") {
      return 0;
    } else if (type == "eval") {
      const auto id = msg.value("id", std::uint64_t{0});
      const auto x = msg.value("x", std::vector<double>{});
      if (name == "hang") {
        for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
      }
      if (name == "crash" && evals >= crash_after) std::_Exit(3);
      ++evals;
      if (name == "malformed") {
        out << "this is not json {" << '\n' << std::flush;
        continue;
      }
      double y = 0.0;
      for (double v : x) y += name == "sum" ? v : (v - 0.3) * (v - 0.3);
      out << json{{"type", "result"}, {"id", id}, {"y", y}}.dump() << '\n' << std::flush;
    }
  }
  return 0;
}

}  // namespace mpd
