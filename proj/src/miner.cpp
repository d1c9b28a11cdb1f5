#include "dynflow/miner.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "dynflow/rng.hpp"

namespace dynflow {

namespace {

// Candidate actor ids per slot, sorted; the assignment space is their product.
std::vector<std::vector<std::string>> slot_candidates(const Template& t, const ActorPool& pool) {
  std::vector<std::vector<std::string>> out;
  for (ActorRole role : t.slot_roles()) {
    std::vector<std::string> ids;
    for (const ActorSpec* a : pool.with_role(role)) ids.push_back(a->id);
    out.push_back(std::move(ids));
  }
  return out;
}

std::uint64_t space_size(const std::vector<std::vector<std::string>>& slots) {
  std::uint64_t n = 1;
  for (const auto& s : slots) {
    if (s.empty()) return 0;
    if (n > (std::uint64_t{1} << 62) / s.size()) return std::uint64_t{1} << 62;  // saturate
    n *= s.size();
  }
  return n;
}

// Mixed-radix decode; index 0 is the lexicographically first assignment.
std::vector<std::string> nth_assignment(const std::vector<std::vector<std::string>>& slots,
                                        std::uint64_t index) {
  std::vector<std::string> out(slots.size());
  for (std::size_t i = slots.size(); i-- > 0;) {
    out[i] = slots[i][index % slots[i].size()];
    index /= slots[i].size();
  }
  return out;
}

}  // namespace

Workflow baseline_workflow(const Registry& reg) {
  auto ordered = reg.templates_by_complexity();
  const std::vector<ActorRole> want = {ActorRole::Generator};
  for (const auto& t : ordered) {
    if (t.slot_roles() != want) continue;
    auto gens = reg.pool.with_role(ActorRole::Generator);
    if (gens.empty()) break;
    return f_match(t, {gens.front()->id}, reg.pool);
  }
  throw WorkflowError(WorkflowError::Code::Invalid,
                      "registry lacks a single-generator baseline template");
}

FilterOutcome filter_trivial(std::span<const Task> tasks, const ExecEngine& engine) {
  const Workflow baseline = baseline_workflow(engine.registry());
  FilterOutcome out;
  for (const auto& task : tasks) {
    if (!engine.gold_executes(task)) {
      out.dropped_invalid_gold.push_back(task);
      continue;
    }
    ExecutionRecord rec = engine.run_workflow(baseline, task);
    if (rec.stage == ExecutionStage::ResultCorrect) {
      out.dropped_trivial.push_back(task);
    } else {
      out.kept.push_back(task);
    }
  }
  return out;
}

MineResult mine(const Task& task, const MinerConfig& cfg, const ExecEngine& engine) {
  if (cfg.per_template_budget < 1) {
    throw WorkflowError(WorkflowError::Code::Invalid, "per_template_budget must be >= 1");
  }
  const Registry& reg = engine.registry();
  auto ordered = reg.templates_by_complexity();

  for (std::size_t rank = 0; rank < ordered.size(); ++rank) {
    const Template& tpl = ordered[rank];
    auto slots = slot_candidates(tpl, reg.pool);
    const std::uint64_t total = space_size(slots);
    if (total == 0) continue;  // pool cannot staff this template

    std::vector<std::uint64_t> indices;
    const auto budget = static_cast<std::uint64_t>(cfg.per_template_budget);
    if (total <= budget) {
      indices.resize(total);
      for (std::uint64_t i = 0; i < total; ++i) indices[i] = i;
    } else {
      // Seeded sample without replacement, visited in canonical order.
      SplitMix64 rng(derive_key(mix64(cfg.seed), "mine", task.task_id, tpl.id));
      std::set<std::uint64_t> picked;
      while (picked.size() < budget) {
        picked.insert(rng.uniform_index(static_cast<std::size_t>(total)));
      }
      indices.assign(picked.begin(), picked.end());
    }

    for (std::uint64_t idx : indices) {
      Workflow w = f_match(tpl, nth_assignment(slots, idx), reg.pool);
      ExecutionRecord rec = engine.run_workflow(w, task);
      if (rec.stage == ExecutionStage::ResultCorrect) {
        return SupervisionRecord{task.task_id, std::move(w), static_cast<int>(rank),
                                 rec.elapsed_seconds};
      }
    }
  }
  return Deferred{task.task_id};
}

void write_supervision_jsonl(std::span<const SupervisionRecord> records, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw WorkflowError(WorkflowError::Code::Invalid, "cannot write supervision file: " + path);
  }
  for (const auto& rec : records) {
    nlohmann::json j;
    j["task_id"] = rec.task_id;
    j["template_id"] = rec.workflow.template_id;
    j["assignment"] = rec.workflow.assignment;
    j["template_rank"] = rec.template_rank;
    j["elapsed_seconds"] = rec.elapsed_seconds;
    out << j.dump() << "\n";
  }
}

}  // namespace dynflow
