#pragma once

#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "dynflow/exec.hpp"
#include "dynflow/matrices.hpp"
#include "dynflow/reward.hpp"

namespace dynflow {

inline constexpr int kLogSchemaVersion = 1;

// One execution event; serializes to exactly one JSONL line.
struct LogRecord {
  int schema_version = kLogSchemaVersion;
  double timestamp = 0.0;  // unix seconds; 0 under --deterministic
  std::string task_id;
  std::string workflow;   // canonical string; empty when the answer never parsed
  std::string mask_bits;  // pool-order retention bits
  ExecutionStage stage = ExecutionStage::FormatInvalid;
  double elapsed_seconds = 0.0;
  RewardBreakdown reward;
  double total = 0.0;
  int lambda = 1;

  nlohmann::json to_json() const;
  static LogRecord from_json(const nlohmann::json& j);
};

class LogParseError : public std::runtime_error {
 public:
  LogParseError(int line_number, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_number) + ": " + what),
        line_number_(line_number) {}
  int line_number() const { return line_number_; }

 private:
  int line_number_;
};

// Append-only writer; line appends are serialized through one mutex.
class LogWriter {
 public:
  explicit LogWriter(const std::string& path, bool append = false);
  void write(const LogRecord& rec);

 private:
  std::ofstream out_;
  std::mutex mu_;
};

// Streaming reader: one record at a time, constant memory, blank lines
// skipped. Strict mode throws LogParseError with the offending line number;
// lenient mode skips bad lines and counts them. Unknown schema versions are
// rejected in both modes.
class LogReader {
 public:
  explicit LogReader(const std::string& path, bool lenient = false);
  std::optional<LogRecord> next();
  int skipped() const { return skipped_; }

 private:
  std::ifstream in_;
  bool lenient_;
  int line_number_ = 0;
  int skipped_ = 0;
};

// Latest record per (workflow, task) becomes one matrix cell; every
// workflow/task combination seen in the log must be covered.
std::pair<OutcomeMatrix, RuntimeMatrix> matrices_from_logs(const std::string& path, bool lenient);

// Deterministic parallel map: fn(i) for i in [0, n), sharded over at most
// `workers` threads; output slots must be preallocated by the caller.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

// Worker-cap default: DYNFLOW_WORKERS or fallback.
int default_worker_cap(int fallback = 1);

}  // namespace dynflow
