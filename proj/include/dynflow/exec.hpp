#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dynflow/workflow.hpp"

namespace dynflow {

// Pipeline progress order; evaluation stops at the first failing gate.
enum class ExecutionStage { FormatInvalid, Timeout, ExecutionFailed, ResultIncorrect, ResultCorrect };

std::string_view stage_name(ExecutionStage s);
ExecutionStage stage_from_name(std::string_view name);

// SQL cell value: null, integer, real, or text.
using Value = std::variant<std::monostate, std::int64_t, double, std::string>;

struct ResultSet {
  std::vector<std::string> columns;
  std::vector<std::vector<Value>> rows;  // every row arity == columns.size()
};

struct ExecutionRecord {
  std::string task_id;
  std::optional<Workflow> workflow;          // absent when the answer text never parsed
  std::optional<std::string> produced_sql;   // present iff stage >= ExecutionFailed
  ExecutionStage stage = ExecutionStage::FormatInvalid;
  double elapsed_seconds = 0.0;
  std::optional<std::string> result_signature;  // present iff result was compared
};

struct BackendError {
  std::string message;
};

using ExecuteResult = std::variant<ResultSet, BackendError>;

// Embedded relational engine boundary. Implementations either tolerate
// concurrent execute() calls or declare themselves serial, in which case the
// engine funnels calls through one queue.
class RelationalBackend {
 public:
  virtual ~RelationalBackend() = default;
  virtual ExecuteResult execute(const std::string& sql, const std::string& db_ref,
                                double budget_seconds) = 0;
  virtual bool concurrent_safe() const { return false; }
};

// Execution-accuracy comparison: row order ignored (multiset), column names
// ignored but counts must match, numerics equal within absolute 1e-6,
// strings compared after trimming surrounding whitespace.
bool compare_results(const ResultSet& predicted, const ResultSet& gold);

// Stable digest of the normalized result set; equal results share a signature.
std::string result_signature(const ResultSet& rs);

// Plurality over result signatures; ties broken by smaller total elapsed
// within the tied groups, then by input order. Records without a signature
// form no group; if none has one, the first record is returned unchanged.
// Throws WorkflowError on empty input.
ExecutionRecord majority_vote(std::span<const ExecutionRecord> records);

}  // namespace dynflow
