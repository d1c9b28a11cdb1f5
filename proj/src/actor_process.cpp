#include "dynflow/actor_process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace dynflow {

using nlohmann::json;

ProcessClient::ProcessClient(std::vector<std::string> argv) : argv_(std::move(argv)) {}

ProcessClient::~ProcessClient() { shutdown(); }

bool ProcessClient::ensure_running() {
  if (pid_ > 0) {
    int status = 0;
    if (waitpid(pid_, &status, WNOHANG) == 0) return true;  // still alive
    pid_ = -1;
  }
  shutdown();
  if (argv_.empty()) return false;

  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0) return false;
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    return false;
  }
  int pid = fork();
  if (pid < 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    return false;
  }
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    std::vector<char*> cargv;
    cargv.reserve(argv_.size() + 1);
    for (auto& a : argv_) cargv.push_back(a.data());
    cargv.push_back(nullptr);
    execvp(cargv[0], cargv.data());
    _exit(127);
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  close(in_pipe[0]);
  close(out_pipe[1]);
  residual_.clear();
  return true;
}

void ProcessClient::shutdown() {
  if (to_child_ >= 0) {
    close(to_child_);
    to_child_ = -1;
  }
  if (from_child_ >= 0) {
    close(from_child_);
    from_child_ = -1;
  }
  if (pid_ > 0) {
    kill(pid_, SIGTERM);
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::variant<json, std::string> ProcessClient::exchange(const std::string& line,
                                                        double budget_seconds) {
  if (!ensure_running()) return std::string("failed to launch actor process");

  std::size_t written = 0;
  while (written < line.size()) {
    ssize_t n = write(to_child_, line.data() + written, line.size() - written);
    if (n <= 0) {
      if (errno == EINTR) continue;
      return std::string("write to actor process failed: ") + std::strerror(errno);
    }
    written += static_cast<std::size_t>(n);
  }

  auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(budget_seconds);
  while (true) {
    auto nl = residual_.find('\n');
    if (nl != std::string::npos) {
      std::string payload = residual_.substr(0, nl);
      residual_.erase(0, nl + 1);
      json parsed = json::parse(payload, nullptr, false);
      if (parsed.is_discarded()) return std::string("malformed response frame");
      return parsed;
    }
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) return std::string("actor response exceeded budget");

    pollfd pfd{from_child_, POLLIN, 0};
    int pr = poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining.count(), 1000)));
    if (pr < 0) {
      if (errno == EINTR) continue;
      return std::string("poll on actor process failed");
    }
    if (pr == 0) continue;
    char buf[4096];
    ssize_t n = read(from_child_, buf, sizeof(buf));
    if (n < 0) {
      if (errno == EINTR) continue;
      return std::string("read from actor process failed");
    }
    if (n == 0) return std::string("actor process closed its output");
    residual_.append(buf, static_cast<std::size_t>(n));
  }
}

std::variant<json, std::string> ProcessClient::request(const json& req, double budget_seconds) {
  std::lock_guard<std::mutex> lock(mu_);
  std::string line = req.dump();
  line.push_back('\n');
  auto first = exchange(line, budget_seconds);
  if (std::holds_alternative<json>(first)) return first;
  // one restart, one retry
  shutdown();
  return exchange(line, budget_seconds);
}

}  // namespace dynflow
