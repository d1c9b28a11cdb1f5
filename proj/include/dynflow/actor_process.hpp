#pragma once

#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace dynflow {

// Line-delimited JSON over a child process's stdin/stdout, one request per
// invocation. The child is spawned lazily, kept alive across requests, and
// restarted at most once per request on crash or malformed framing.
class ProcessClient {
 public:
  explicit ProcessClient(std::vector<std::string> argv);
  ~ProcessClient();

  ProcessClient(const ProcessClient&) = delete;
  ProcessClient& operator=(const ProcessClient&) = delete;

  // Parsed response object, or an error description.
  std::variant<nlohmann::json, std::string> request(const nlohmann::json& req,
                                                    double budget_seconds);

 private:
  bool ensure_running();
  void shutdown();
  std::variant<nlohmann::json, std::string> exchange(const std::string& line,
                                                     double budget_seconds);

  std::vector<std::string> argv_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string residual_;
  std::mutex mu_;
};

}  // namespace dynflow
