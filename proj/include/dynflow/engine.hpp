#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynflow/actor_process.hpp"
#include "dynflow/exec.hpp"
#include "dynflow/registry.hpp"
#include "dynflow/synth_env.hpp"
#include "dynflow/workflow.hpp"

namespace dynflow {

// Input handed to an actor invocation: accumulated context plus the current
// SQL candidate list, with the workflow position for synthetic lookups.
struct StageInput {
  nlohmann::json context = nlohmann::json::object();
  std::vector<std::string> candidates;
  const Workflow* workflow = nullptr;
  int stage_index = 0;
  int slot_index = 0;
};

struct ActorOutput {
  bool failed = false;
  std::string error;
  nlohmann::json context_update;      // enricher roles
  std::vector<std::string> emitted;    // generator/scaler/optimizer output
  int selected = -1;                   // selector choice
  double elapsed_seconds = 0.0;
};

struct EngineConfig {
  double timeout_seconds = 300.0;
  int worker_cap = 1;  // parallel-stage concurrency for external actors
};

// Runs workflows stage by stage under a wall-clock budget, executes the
// produced SQL, and grades it against the task's gold SQL. With synthetic
// bindings the clock is virtual (planted slot durations), so records are
// bit-reproducible across runs and thread counts.
class ExecEngine {
 public:
  ExecEngine(const Registry& registry, RelationalBackend& backend, EngineConfig cfg);

  // Planted truth for synthetic actor bindings.
  void bind_environment(const PlantedEnv* env) { env_ = env; }

  ExecutionRecord run_workflow(const Workflow& w, const Task& task) const;
  // Parse failure -> format_invalid record; otherwise run the parsed workflow.
  ExecutionRecord run_answer_text(const std::string& answer_text, const Task& task) const;

  ActorOutput invoke_actor(const ActorSpec& actor, const StageInput& input, const Task& task,
                           double budget_seconds) const;

  // True when the task's gold SQL executes cleanly on the backend.
  bool gold_executes(const Task& task) const;

  const Registry& registry() const { return registry_; }
  const EngineConfig& config() const { return cfg_; }

 private:
  ActorOutput invoke_synthetic(const ActorSpec& actor, const StageInput& input,
                               const Task& task) const;
  ActorOutput invoke_external(const ActorSpec& actor, const StageInput& input, const Task& task,
                              double budget_seconds) const;
  ExecuteResult backend_execute(const std::string& sql, const std::string& db_ref,
                                double budget_seconds) const;

  const Registry& registry_;
  RelationalBackend& backend_;
  EngineConfig cfg_;
  const PlantedEnv* env_ = nullptr;
  mutable std::mutex backend_mu_;   // serializes execute() for serial backends
  mutable std::mutex clients_mu_;
  mutable std::map<std::string, std::unique_ptr<ProcessClient>> clients_;  // one per actor
};

}  // namespace dynflow
