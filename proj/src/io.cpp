#include "dynflow/io.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <set>
#include <thread>
#include <vector>

namespace dynflow {

using nlohmann::json;

json LogRecord::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["timestamp"] = timestamp;
  j["task_id"] = task_id;
  j["workflow"] = workflow;
  j["mask"] = mask_bits;
  j["stage"] = stage_name(stage);
  j["elapsed_seconds"] = elapsed_seconds;
  json r;
  r["format"] = reward.format;
  if (reward.timeout_pen) r["timeout_pen"] = *reward.timeout_pen;
  if (reward.execution) r["execution"] = *reward.execution;
  if (reward.result) r["result"] = *reward.result;
  if (reward.time) r["time"] = *reward.time;
  j["reward"] = r;
  j["total"] = total;
  j["lambda"] = lambda;
  return j;
}

LogRecord LogRecord::from_json(const json& j) {
  LogRecord rec;
  rec.schema_version = j.at("schema_version").get<int>();
  if (rec.schema_version != kLogSchemaVersion) {
    throw std::runtime_error("unknown schema_version " + std::to_string(rec.schema_version));
  }
  rec.timestamp = j.at("timestamp").get<double>();
  rec.task_id = j.at("task_id").get<std::string>();
  rec.workflow = j.at("workflow").get<std::string>();
  rec.mask_bits = j.at("mask").get<std::string>();
  rec.stage = stage_from_name(j.at("stage").get<std::string>());
  rec.elapsed_seconds = j.at("elapsed_seconds").get<double>();
  const json& r = j.at("reward");
  rec.reward.format = r.at("format").get<double>();
  if (r.contains("timeout_pen")) rec.reward.timeout_pen = r.at("timeout_pen").get<double>();
  if (r.contains("execution")) rec.reward.execution = r.at("execution").get<double>();
  if (r.contains("result")) rec.reward.result = r.at("result").get<double>();
  if (r.contains("time")) rec.reward.time = r.at("time").get<double>();
  rec.reward.total = j.at("total").get<double>();
  rec.total = rec.reward.total;
  rec.lambda = j.at("lambda").get<int>();
  return rec;
}

LogWriter::LogWriter(const std::string& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open log for writing: " + path);
}

void LogWriter::write(const LogRecord& rec) {
  std::lock_guard<std::mutex> lock(mu_);
  out_ << rec.to_json().dump() << "\n";
}

LogReader::LogReader(const std::string& path, bool lenient) : in_(path), lenient_(lenient) {
  if (!in_) throw std::runtime_error("cannot open log for reading: " + path);
}

std::optional<LogRecord> LogReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_number_;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;  // blank
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (lenient_) {
        ++skipped_;
        continue;
      }
      throw LogParseError(line_number_, "corrupt JSON");
    }
    try {
      return LogRecord::from_json(j);
    } catch (const std::exception& e) {
      // Version mismatches are rejected even in lenient mode.
      std::string what = e.what();
      if (!lenient_ || what.find("schema_version") != std::string::npos) {
        throw LogParseError(line_number_, what);
      }
      ++skipped_;
    }
  }
  return std::nullopt;
}

std::pair<OutcomeMatrix, RuntimeMatrix> matrices_from_logs(const std::string& path, bool lenient) {
  struct Cell {
    double bit = 0.0;
    double runtime = 0.0;
  };
  std::map<std::pair<std::string, std::string>, Cell> cells;  // (workflow, task) -> latest
  std::set<std::string> workflows, tasks;

  LogReader reader(path, lenient);
  while (auto rec = reader.next()) {
    if (rec->workflow.empty()) continue;  // unattributable format failures
    workflows.insert(rec->workflow);
    tasks.insert(rec->task_id);
    Cell c;
    c.bit = rec->stage == ExecutionStage::ResultCorrect ? 1.0 : 0.0;
    c.runtime = std::max(rec->elapsed_seconds, 1e-9);  // runtimes must stay positive
    cells[{rec->workflow, rec->task_id}] = c;          // later records overwrite earlier
  }
  if (workflows.empty()) throw std::runtime_error("log contains no attributable records");

  OutcomeMatrix y;
  RuntimeMatrix t;
  y.workflows.assign(workflows.begin(), workflows.end());
  y.tasks.assign(tasks.begin(), tasks.end());
  t.workflows = y.workflows;
  t.tasks = y.tasks;
  y.bits.resize(static_cast<Eigen::Index>(y.workflows.size()),
                static_cast<Eigen::Index>(y.tasks.size()));
  t.values.resizeLike(y.bits);
  for (std::size_t i = 0; i < y.workflows.size(); ++i) {
    for (std::size_t q = 0; q < y.tasks.size(); ++q) {
      auto it = cells.find({y.workflows[i], y.tasks[q]});
      if (it == cells.end()) {
        throw std::runtime_error("log does not cover (workflow, task) = (" + y.workflows[i] +
                                 ", " + y.tasks[q] + ")");
      }
      y.bits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = it->second.bit;
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = it->second.runtime;
    }
  }
  return {std::move(y), std::move(t)};
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(w));
  for (int t = 0; t < w; ++t) {
    pool.emplace_back([&, t]() {
      for (std::size_t i = static_cast<std::size_t>(t); i < n; i += static_cast<std::size_t>(w)) {
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

int default_worker_cap(int fallback) {
  if (const char* env = std::getenv("DYNFLOW_WORKERS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return fallback;
}

}  // namespace dynflow
