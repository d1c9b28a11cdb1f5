#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynflow/analysis.hpp"
#include "dynflow/exec.hpp"
#include "dynflow/matrices.hpp"
#include "dynflow/registry.hpp"
#include "dynflow/rng.hpp"
#include "dynflow/workflow.hpp"

namespace dynflow {

// Per-role mean durations with a multiplicative noise envelope; a parallel
// stage costs the max over its slots, stages add up.
struct RuntimeModel {
  std::map<ActorRole, double> role_mean_seconds;
  double noise_lo = 0.5;
  double noise_hi = 1.5;

  static RuntimeModel defaults();
  double mean_for(ActorRole role) const;
};

// Workflow-complexity tiers keyed by template depth; each tier carries its
// own base success probability.
std::string_view tier_name_for_stage_count(int stage_count);
std::map<std::string, double> default_base_accuracy();

enum class PlantedFailMode { WrongResult, InvalidSql };

struct PlantedOutcome {
  bool success = false;
  double runtime_seconds = 0.0;
};

// Deterministic success/runtime tables over (workflow, task) pairs. Every
// planted quantity is a pure function of (seed, canonical_string, task_id),
// so independent implementations agree bit-for-bit given the seed.
class PlantedEnv {
 public:
  PlantedEnv(Registry registry, std::vector<Task> tasks, std::uint64_t seed, double heterogeneity,
             std::map<std::string, double> base_accuracy, RuntimeModel runtime_model,
             double unsolvable_fraction = 0.0);

  const Registry& registry() const { return registry_; }
  const std::vector<Task>& tasks() const { return tasks_; }
  const Task* find_task(std::string_view task_id) const;
  std::uint64_t seed() const { return seed_; }
  double heterogeneity() const { return h_; }
  const std::map<std::string, double>& base_accuracy() const { return base_accuracy_; }
  const RuntimeModel& runtime_model() const { return runtime_model_; }

  // Full-mask enumeration, canonical order; cached.
  const std::vector<Workflow>& workflows() const { return workflows_; }

  // Planted truth per (workflow, task). Throws on unknown workflow/task.
  PlantedOutcome outcome(const Workflow& w, const Task& task) const;
  bool success(const Workflow& w, const Task& task) const;
  double runtime(const Workflow& w, const Task& task) const;
  // Duration of one role slot; a stage costs the max over its slots.
  double slot_duration(const Workflow& w, const Task& task, int stage_index, int slot_index) const;
  PlantedFailMode fail_mode(const Workflow& w, const Task& task) const;
  // The single SQL statement the pipeline ends with: the task's gold SQL when
  // the pair is planted successful, otherwise a wrong or syntactically
  // invalid statement per fail_mode.
  std::string final_sql(const Workflow& w, const Task& task) const;
  // Deterministic candidate score used by synthetic selectors: 1.0 for the
  // planted final SQL, below 1 otherwise.
  double selector_score(const Task& task, const std::string& candidate_sql) const;

  // Staged reward total this pair earns under the given timeout, mirroring
  // the execution gates (used by the synthetic judge and trainer).
  double staged_total(const Workflow& w, const Task& task, double timeout_seconds) const;
  // Highest staged_total for the task; ties broken by enumeration order.
  const Workflow& best_workflow(const Task& task, double timeout_seconds) const;

  std::pair<OutcomeMatrix, RuntimeMatrix> materialize() const;

  nlohmann::json to_json() const;
  static PlantedEnv from_json(const nlohmann::json& j);
  static PlantedEnv load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::string_view tier_of(const Workflow& w) const;
  double base_of(const Workflow& w) const;
  double perturb(const Workflow& w, const Task& task) const;

  Registry registry_;
  std::vector<Task> tasks_;
  std::uint64_t seed_;
  double h_;
  std::map<std::string, double> base_accuracy_;
  RuntimeModel runtime_model_;
  double unsolvable_fraction_ = 0.0;
  std::vector<Workflow> workflows_;
  std::map<std::string, std::size_t, std::less<>> task_index_;
};

Task planted_task(std::string task_id, Difficulty difficulty);

// Gold SQL marker for planted tasks; executable by PlantedBackend.
std::string planted_gold_sql(std::string_view task_id);

// Construction knobs beyond plant_env's positional arguments.
struct PlantOptions {
  std::vector<std::pair<ActorRole, int>> pool_spec;  // empty -> one actor per role
  std::map<std::string, double> base_accuracy = default_base_accuracy();
  // Share of tasks marked planted-unsolvable (every workflow fails); used by
  // miner fixtures. 0 keeps the plain construction.
  double unsolvable_fraction = 0.0;
};

// Deterministic planted environment: first k_templates of the bundled
// catalog in complexity order, q_tasks tasks with difficulties cycling
// easy..highly_complex. h in [0,1] scales per-(workflow, task) perturbation.
PlantedEnv plant_env(std::uint64_t seed, int k_templates, int q_tasks, double h,
                     RuntimeModel runtime_model = RuntimeModel::defaults(),
                     PlantOptions options = {});

// Relational backend for planted databases: any single SELECT statement
// evaluates to a one-cell result carrying its own normalized text; anything
// else is a syntax error. Distinct statements therefore produce distinct
// results, which is exactly what planted outcomes need.
class PlantedBackend : public RelationalBackend {
 public:
  ExecuteResult execute(const std::string& sql, const std::string& db_ref,
                        double budget_seconds) override;
  bool concurrent_safe() const override { return true; }
};

// Exhaustive enumeration of all 2^(K*Q) outcome tables, index order.
class OutcomeTableEnumerator {
 public:
  OutcomeTableEnumerator(int k, int q);  // throws when K*Q > 20

  std::uint64_t count() const { return std::uint64_t{1} << (k_ * q_); }
  OutcomeMatrix table(std::uint64_t index) const;

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::uint64_t i = 0; i < count(); ++i) fn(table(i));
  }

 private:
  int k_;
  int q_;
};

// Direct-summation oracle over an outcome table; same computation as
// gap_report, exposed under the name the environment module owns.
GapReport brute_force_report(const OutcomeMatrix& y,
                             const std::optional<Eigen::VectorXd>& weights = {});

}  // namespace dynflow
