#include "dynflow/engine.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <thread>

namespace dynflow {

using nlohmann::json;

namespace {

// A single statement may end with one trailing ';'; any further top-level
// ';' followed by content means multiple statements.
bool has_multiple_statements(const std::string& sql) {
  char quote = 0;
  for (std::size_t i = 0; i < sql.size(); ++i) {
    char c = sql[i];
    if (quote != 0) {
      if (c == quote) quote = 0;
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
      continue;
    }
    if (c == ';') {
      for (std::size_t j = i + 1; j < sql.size(); ++j) {
        if (!std::isspace(static_cast<unsigned char>(sql[j]))) return true;
      }
      return false;
    }
  }
  return false;
}

std::string join_candidates(const std::vector<std::string>& candidates) {
  std::string out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i > 0) out += ";\n";
    out += candidates[i];
  }
  return out;
}

bool is_enricher(ActorRole role) {
  return role == ActorRole::Reducer || role == ActorRole::Parser || role == ActorRole::Decomposer;
}

bool is_emitter(ActorRole role) {
  return role == ActorRole::Generator || role == ActorRole::Scaler;
}

}  // namespace

ExecEngine::ExecEngine(const Registry& registry, RelationalBackend& backend, EngineConfig cfg)
    : registry_(registry), backend_(backend), cfg_(cfg) {
  if (cfg_.timeout_seconds <= 0.0) {
    throw WorkflowError(WorkflowError::Code::Invalid, "engine timeout must be positive");
  }
  if (cfg_.worker_cap < 1) cfg_.worker_cap = 1;
}

ExecuteResult ExecEngine::backend_execute(const std::string& sql, const std::string& db_ref,
                                          double budget_seconds) const {
  if (backend_.concurrent_safe()) return backend_.execute(sql, db_ref, budget_seconds);
  std::lock_guard<std::mutex> lock(backend_mu_);
  return backend_.execute(sql, db_ref, budget_seconds);
}

bool ExecEngine::gold_executes(const Task& task) const {
  auto res = backend_execute(task.gold_sql, task.db_ref, cfg_.timeout_seconds);
  return std::holds_alternative<ResultSet>(res);
}

ActorOutput ExecEngine::invoke_synthetic(const ActorSpec& actor, const StageInput& input,
                                         const Task& task) const {
  if (env_ == nullptr) {
    throw WorkflowError(WorkflowError::Code::Invalid,
                        "synthetic actor '" + actor.id + "' needs a bound environment");
  }
  if (input.workflow == nullptr) {
    throw WorkflowError(WorkflowError::Code::Invalid, "synthetic invocation needs a workflow");
  }
  const Workflow& w = *input.workflow;
  ActorOutput out;
  out.elapsed_seconds = env_->slot_duration(w, task, input.stage_index, input.slot_index);

  switch (actor.role) {
    case ActorRole::Reducer:
    case ActorRole::Parser:
    case ActorRole::Decomposer:
      out.context_update = json{{std::string(role_name(actor.role)), actor.id}};
      break;
    case ActorRole::Generator:
      out.emitted = {env_->final_sql(w, task)};
      break;
    case ActorRole::Scaler: {
      std::uint64_t key = derive_key(mix64(env_->seed()), "alt", actor.id, task.task_id,
                                     static_cast<std::uint64_t>(input.slot_index));
      char buf[40];
      std::snprintf(buf, sizeof(buf), "SELECT 'alt_%016llx'",
                    static_cast<unsigned long long>(key));
      out.emitted = {env_->final_sql(w, task), buf};
      break;
    }
    case ActorRole::Optimizer:
      if (input.candidates.empty()) {
        out.failed = true;
        out.error = "optimizer received no candidates";
      } else {
        out.emitted = {input.candidates.front()};
      }
      break;
    case ActorRole::Selector: {
      if (input.candidates.empty()) {
        out.failed = true;
        out.error = "selector received no candidates";
        break;
      }
      const std::string target = env_->final_sql(w, task);
      int best = 0;
      double best_score = -1.0;
      for (std::size_t i = 0; i < input.candidates.size(); ++i) {
        const std::string& c = input.candidates[i];
        double score = (c == target) ? 1.0 : env_->selector_score(task, c);
        if (score > best_score) {  // ties keep the earliest candidate
          best_score = score;
          best = static_cast<int>(i);
        }
      }
      out.selected = best;
      break;
    }
  }
  return out;
}

ActorOutput ExecEngine::invoke_external(const ActorSpec& actor, const StageInput& input,
                                        const Task& task, double budget_seconds) const {
  ProcessClient* client = nullptr;
  {
    std::lock_guard<std::mutex> lock(clients_mu_);
    auto it = clients_.find(actor.id);
    if (it == clients_.end()) {
      it = clients_.emplace(actor.id, std::make_unique<ProcessClient>(actor.binding.command))
               .first;
    }
    client = it->second.get();
  }

  json req;
  req["role"] = role_name(actor.role);
  req["task_id"] = task.task_id;
  req["question"] = task.question;
  req["schema"] = task.db_ref;
  req["knowledge"] = task.knowledge;
  req["context"] = input.context;
  req["candidates"] = input.candidates;

  auto t0 = std::chrono::steady_clock::now();
  auto resp = client->request(req, budget_seconds);
  ActorOutput out;
  out.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (const auto* err = std::get_if<std::string>(&resp)) {
    out.failed = true;
    out.error = *err;
    return out;
  }
  const json& body = std::get<json>(resp);
  if (body.contains("error")) {
    out.failed = true;
    out.error = body["error"].is_string() ? body["error"].get<std::string>() : body["error"].dump();
    return out;
  }
  if (!body.contains("output")) {
    out.failed = true;
    out.error = "response frame lacks 'output'";
    return out;
  }
  const json& output = body["output"];
  switch (actor.role) {
    case ActorRole::Reducer:
    case ActorRole::Parser:
    case ActorRole::Decomposer:
      if (!output.is_object()) {
        out.failed = true;
        out.error = "enricher output must be an object";
      } else {
        out.context_update = output;
      }
      break;
    case ActorRole::Generator:
    case ActorRole::Optimizer:
      if (!output.is_string()) {
        out.failed = true;
        out.error = "generator/optimizer output must be a string";
      } else {
        out.emitted = {output.get<std::string>()};
      }
      break;
    case ActorRole::Scaler:
      if (output.is_string()) {
        out.emitted = {output.get<std::string>()};
      } else if (output.is_array()) {
        for (const auto& item : output) {
          if (!item.is_string()) {
            out.failed = true;
            out.error = "scaler output array must hold strings";
            break;
          }
          out.emitted.push_back(item.get<std::string>());
        }
      } else {
        out.failed = true;
        out.error = "scaler output must be a string or array of strings";
      }
      break;
    case ActorRole::Selector:
      if (!output.is_number_integer() ||
          output.get<std::int64_t>() < 0 ||
          output.get<std::int64_t>() >= static_cast<std::int64_t>(input.candidates.size())) {
        out.failed = true;
        out.error = "selector output must index the candidate list";
      } else {
        out.selected = static_cast<int>(output.get<std::int64_t>());
      }
      break;
  }
  return out;
}

ActorOutput ExecEngine::invoke_actor(const ActorSpec& actor, const StageInput& input,
                                     const Task& task, double budget_seconds) const {
  if (budget_seconds <= 0.0) {
    ActorOutput out;
    out.failed = true;
    out.error = "budget exhausted";
    return out;
  }
  if (actor.binding.kind == ActorBinding::Kind::Synthetic) {
    return invoke_synthetic(actor, input, task);
  }
  return invoke_external(actor, input, task, budget_seconds);
}

ExecutionRecord ExecEngine::run_workflow(const Workflow& w, const Task& task) const {
  const Template* tpl = registry_.find_template(w.template_id);
  if (tpl == nullptr) {
    throw WorkflowError(WorkflowError::Code::UnknownTemplate,
                        "run_workflow: unknown template " + w.template_id);
  }
  if (static_cast<int>(w.assignment.size()) != tpl->slot_count()) {
    throw WorkflowError(WorkflowError::Code::Arity, "run_workflow: assignment/slot mismatch");
  }

  ExecutionRecord rec;
  rec.task_id = task.task_id;
  rec.workflow = w;

  bool all_synthetic = true;
  for (const auto& id : w.assignment) {
    const ActorSpec* a = registry_.pool.find(id);
    if (a == nullptr) {
      throw WorkflowError(WorkflowError::Code::UnknownActor, "run_workflow: unknown actor " + id);
    }
    if (a->binding.kind != ActorBinding::Kind::Synthetic) all_synthetic = false;
  }

  double elapsed = 0.0;
  json context = json::object();
  std::vector<std::string> candidates;
  bool actor_failed = false;

  int slot_cursor = 0;
  for (int s = 0; s < tpl->stage_count() && !actor_failed; ++s) {
    const auto& stage = tpl->stages[static_cast<std::size_t>(s)];
    const int width = stage.width();

    std::vector<ActorOutput> outputs(static_cast<std::size_t>(width));
    double budget = cfg_.timeout_seconds - elapsed;

    auto run_slot = [&](int i) {
      StageInput in;
      in.context = context;
      in.candidates = candidates;
      in.workflow = &w;
      in.stage_index = s;
      in.slot_index = i;
      const ActorSpec* actor = registry_.pool.find(w.assignment[static_cast<std::size_t>(slot_cursor + i)]);
      outputs[static_cast<std::size_t>(i)] = invoke_actor(*actor, in, task, budget);
    };

    bool stage_external = false;
    for (int i = 0; i < width; ++i) {
      const ActorSpec* actor =
          registry_.pool.find(w.assignment[static_cast<std::size_t>(slot_cursor + i)]);
      if (actor->binding.kind == ActorBinding::Kind::External) stage_external = true;
    }

    if (stage_external && width > 1 && cfg_.worker_cap > 1) {
      // Parallel group; outputs land in slot order regardless of completion.
      for (int base = 0; base < width; base += cfg_.worker_cap) {
        std::vector<std::thread> pool;
        for (int i = base; i < std::min(width, base + cfg_.worker_cap); ++i) {
          pool.emplace_back([&run_slot, i]() { run_slot(i); });
        }
        for (auto& th : pool) th.join();
      }
    } else {
      for (int i = 0; i < width; ++i) run_slot(i);
    }

    double stage_elapsed = 0.0;
    for (const auto& o : outputs) stage_elapsed = std::max(stage_elapsed, o.elapsed_seconds);
    elapsed += stage_elapsed;
    if (elapsed > cfg_.timeout_seconds) {
      rec.stage = ExecutionStage::Timeout;
      rec.elapsed_seconds = elapsed;
      return rec;
    }

    ActorRole stage_role = stage.roles[0];
    if (is_enricher(stage_role)) {
      for (const auto& o : outputs) {
        if (o.failed) {
          actor_failed = true;
          break;
        }
        for (auto it = o.context_update.begin(); it != o.context_update.end(); ++it) {
          context[it.key()] = it.value();
        }
      }
    } else if (is_emitter(stage_role)) {
      for (const auto& o : outputs) {
        if (o.failed) {
          actor_failed = true;
          break;
        }
        candidates.insert(candidates.end(), o.emitted.begin(), o.emitted.end());
      }
    } else if (stage_role == ActorRole::Optimizer) {
      std::vector<std::string> rewritten;
      for (const auto& o : outputs) {
        if (o.failed || o.emitted.empty()) {
          actor_failed = true;
          break;
        }
        rewritten.push_back(o.emitted.front());
      }
      if (!actor_failed) candidates = std::move(rewritten);
    } else {  // selector
      std::vector<std::string> chosen;
      for (const auto& o : outputs) {
        if (o.failed || o.selected < 0 ||
            o.selected >= static_cast<int>(candidates.size())) {
          actor_failed = true;
          break;
        }
        chosen.push_back(candidates[static_cast<std::size_t>(o.selected)]);
      }
      if (!actor_failed) candidates = std::move(chosen);
    }
    slot_cursor += width;
  }

  if (actor_failed) {
    rec.stage = ExecutionStage::ExecutionFailed;
    rec.produced_sql = std::string{};  // no executable statement was produced
    rec.elapsed_seconds = elapsed;
    return rec;
  }

  if (candidates.size() != 1) {
    rec.stage = ExecutionStage::ExecutionFailed;
    rec.produced_sql = join_candidates(candidates);
    rec.elapsed_seconds = elapsed;
    return rec;
  }
  const std::string sql = candidates.front();
  if (has_multiple_statements(sql)) {
    rec.stage = ExecutionStage::ExecutionFailed;
    rec.produced_sql = sql;
    rec.elapsed_seconds = elapsed;
    return rec;
  }

  auto sql_t0 = std::chrono::steady_clock::now();
  auto predicted = backend_execute(sql, task.db_ref, cfg_.timeout_seconds - elapsed);
  if (!all_synthetic) {
    elapsed +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - sql_t0).count();
  }
  if (elapsed > cfg_.timeout_seconds) {
    rec.stage = ExecutionStage::Timeout;
    rec.elapsed_seconds = elapsed;
    return rec;
  }
  rec.elapsed_seconds = elapsed;
  rec.produced_sql = sql;

  if (std::holds_alternative<BackendError>(predicted)) {
    rec.stage = ExecutionStage::ExecutionFailed;
    return rec;
  }
  const ResultSet& pred_rs = std::get<ResultSet>(predicted);
  rec.result_signature = result_signature(pred_rs);

  auto gold = backend_execute(task.gold_sql, task.db_ref, cfg_.timeout_seconds);
  if (std::holds_alternative<BackendError>(gold)) {
    rec.stage = ExecutionStage::ResultIncorrect;  // gold itself is not executable
    return rec;
  }
  rec.stage = compare_results(pred_rs, std::get<ResultSet>(gold))
                  ? ExecutionStage::ResultCorrect
                  : ExecutionStage::ResultIncorrect;
  return rec;
}

ExecutionRecord ExecEngine::run_answer_text(const std::string& answer_text,
                                            const Task& task) const {
  auto parsed = parse_answer(answer_text, registry_.pool, registry_.templates);
  if (const auto* failure = std::get_if<AnswerFailure>(&parsed)) {
    ExecutionRecord rec;
    rec.task_id = task.task_id;
    rec.stage = ExecutionStage::FormatInvalid;
    rec.elapsed_seconds = 0.0;
    (void)failure;
    return rec;
  }
  return run_workflow(std::get<Workflow>(parsed), task);
}

}  // namespace dynflow
