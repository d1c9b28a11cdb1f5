#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dynflow/engine.hpp"
#include "dynflow/workflow.hpp"

namespace dynflow {

// First correct workflow found under the simplest-first template order.
struct SupervisionRecord {
  std::string task_id;
  Workflow workflow;
  int template_rank = 0;  // position in the complexity order
  double elapsed_seconds = 0.0;
};

// No template produced a correct workflow within budget.
struct Deferred {
  std::string task_id;
};

using MineResult = std::variant<SupervisionRecord, Deferred>;

struct MinerConfig {
  // Assignments tried per template: exhaustive when the space is no larger,
  // otherwise a seeded sample of this many.
  int per_template_budget = 64;
  std::uint64_t seed = 0;
};

struct FilterOutcome {
  std::vector<Task> kept;
  std::vector<Task> dropped_trivial;       // baseline single-generator solves it
  std::vector<Task> dropped_invalid_gold;  // gold SQL does not execute
};

// The designated baseline: the simplest registered single-generator template
// instantiated with the first generator in the pool.
Workflow baseline_workflow(const Registry& reg);

FilterOutcome filter_trivial(std::span<const Task> tasks, const ExecEngine& engine);

MineResult mine(const Task& task, const MinerConfig& cfg, const ExecEngine& engine);

void write_supervision_jsonl(std::span<const SupervisionRecord> records, const std::string& path);

}  // namespace dynflow
