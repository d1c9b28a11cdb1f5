#include "dynflow/synth_env.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace dynflow {

using nlohmann::json;

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

std::string hex16(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Signed offset in [-1, 1] from a hash key.
template <typename... Parts>
double signed_unit(std::uint64_t seed, Parts... parts) {
  return 2.0 * hash01(seed, parts...) - 1.0;
}

constexpr double kPerturbScale = 0.4;
constexpr double kTiltWeight = 0.8;    // difficulty-correlated share
constexpr double kJitterWeight = 0.2;  // per-task share

}  // namespace

RuntimeModel RuntimeModel::defaults() {
  RuntimeModel rm;
  rm.role_mean_seconds = {
      {ActorRole::Reducer, 2.0},   {ActorRole::Parser, 3.0},    {ActorRole::Generator, 8.0},
      {ActorRole::Decomposer, 4.0}, {ActorRole::Scaler, 6.0},    {ActorRole::Optimizer, 5.0},
      {ActorRole::Selector, 2.0},
  };
  return rm;
}

double RuntimeModel::mean_for(ActorRole role) const {
  auto it = role_mean_seconds.find(role);
  if (it == role_mean_seconds.end() || it->second <= 0.0) {
    throw WorkflowError(WorkflowError::Code::Invalid,
                        "runtime model lacks a positive mean for role " +
                            std::string(role_name(role)));
  }
  return it->second;
}

std::string_view tier_name_for_stage_count(int stage_count) {
  if (stage_count <= 1) return "simple";
  if (stage_count <= 3) return "standard";
  return "advanced";
}

std::map<std::string, double> default_base_accuracy() {
  return {{"simple", 0.35}, {"standard", 0.5}, {"advanced", 0.6}};
}

std::string planted_gold_sql(std::string_view task_id) {
  return "SELECT 'gold_" + std::string(task_id) + "'";
}

Task planted_task(std::string task_id, Difficulty difficulty) {
  Task t;
  t.question = "planted question " + task_id;
  t.db_ref = "planted";
  t.gold_sql = planted_gold_sql(task_id);
  t.task_id = std::move(task_id);
  t.difficulty = difficulty;
  return t;
}

PlantedEnv::PlantedEnv(Registry registry, std::vector<Task> tasks, std::uint64_t seed,
                       double heterogeneity, std::map<std::string, double> base_accuracy,
                       RuntimeModel runtime_model, double unsolvable_fraction)
    : registry_(std::move(registry)),
      tasks_(std::move(tasks)),
      seed_(seed),
      h_(heterogeneity),
      base_accuracy_(std::move(base_accuracy)),
      runtime_model_(std::move(runtime_model)),
      unsolvable_fraction_(unsolvable_fraction) {
  if (h_ < 0.0 || h_ > 1.0) {
    throw WorkflowError(WorkflowError::Code::Invalid, "heterogeneity must lie in [0,1]");
  }
  if (tasks_.empty()) {
    throw WorkflowError(WorkflowError::Code::Invalid, "planted environment needs at least one task");
  }
  for (const auto& t : registry_.templates) {
    if (auto v = validate_template(t); !v.empty()) {
      throw WorkflowError(WorkflowError::Code::Invalid,
                          "invalid template " + t.id + ": " + v.front().message);
    }
  }
  workflows_ = enumerate_workflows(registry_.templates, registry_.pool,
                                   MaskVector::all_ones(registry_.pool));
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    auto [_, inserted] = task_index_.emplace(tasks_[i].task_id, i);
    if (!inserted) {
      throw WorkflowError(WorkflowError::Code::Invalid, "duplicate task id: " + tasks_[i].task_id);
    }
  }
}

const Task* PlantedEnv::find_task(std::string_view task_id) const {
  auto it = task_index_.find(task_id);
  if (it == task_index_.end()) return nullptr;
  return &tasks_[it->second];
}

std::string_view PlantedEnv::tier_of(const Workflow& w) const {
  const Template* t = registry_.find_template(w.template_id);
  if (t == nullptr) {
    throw WorkflowError(WorkflowError::Code::UnknownTemplate,
                        "workflow references unknown template " + w.template_id);
  }
  return tier_name_for_stage_count(t->stage_count());
}

double PlantedEnv::base_of(const Workflow& w) const {
  auto tier = tier_of(w);
  auto it = base_accuracy_.find(std::string(tier));
  if (it == base_accuracy_.end()) {
    throw WorkflowError(WorkflowError::Code::Invalid,
                        "base_accuracy lacks tier " + std::string(tier));
  }
  return it->second;
}

double PlantedEnv::perturb(const Workflow& w, const Task& task) const {
  const std::string canon = canonical_string(w);
  double tilt = signed_unit(seed_, "tilt", canon, difficulty_name(task.difficulty));
  double jitter = signed_unit(seed_, "jitter", canon, task.task_id);
  return kPerturbScale * (kTiltWeight * tilt + kJitterWeight * jitter);
}

bool PlantedEnv::success(const Workflow& w, const Task& task) const {
  if (find_task(task.task_id) == nullptr) {
    throw WorkflowError(WorkflowError::Code::Invalid, "unknown task: " + task.task_id);
  }
  if (unsolvable_fraction_ > 0.0 &&
      hash01(seed_, "unsolvable", task.task_id) < unsolvable_fraction_) {
    return false;
  }
  // One uniform draw per task; thresholds vary per workflow, so h = 0 yields
  // identical rows within a base-accuracy tier.
  double u = hash01(seed_, "u", task.task_id);
  double p = clamp01(base_of(w) + h_ * perturb(w, task));
  return u < p;
}

double PlantedEnv::slot_duration(const Workflow& w, const Task& task, int stage_index,
                                 int slot_index) const {
  const Template* t = registry_.find_template(w.template_id);
  if (t == nullptr || stage_index < 0 || stage_index >= t->stage_count()) {
    throw WorkflowError(WorkflowError::Code::Invalid, "slot_duration: bad stage index");
  }
  const auto& stage = t->stages[static_cast<std::size_t>(stage_index)];
  if (slot_index < 0 || slot_index >= stage.width()) {
    throw WorkflowError(WorkflowError::Code::Invalid, "slot_duration: bad slot index");
  }
  double mean = runtime_model_.mean_for(stage.roles[static_cast<std::size_t>(slot_index)]);
  double u = hash01(seed_, "dur", canonical_string(w), task.task_id,
                    static_cast<std::uint64_t>(stage_index), static_cast<std::uint64_t>(slot_index));
  double noise = runtime_model_.noise_lo + u * (runtime_model_.noise_hi - runtime_model_.noise_lo);
  return mean * noise;
}

double PlantedEnv::runtime(const Workflow& w, const Task& task) const {
  const Template* t = registry_.find_template(w.template_id);
  if (t == nullptr) {
    throw WorkflowError(WorkflowError::Code::UnknownTemplate,
                        "workflow references unknown template " + w.template_id);
  }
  double total = 0.0;
  for (int s = 0; s < t->stage_count(); ++s) {
    double stage_dur = 0.0;
    for (int i = 0; i < t->stages[static_cast<std::size_t>(s)].width(); ++i) {
      stage_dur = std::max(stage_dur, slot_duration(w, task, s, i));
    }
    total += stage_dur;
  }
  return total;
}

PlantedOutcome PlantedEnv::outcome(const Workflow& w, const Task& task) const {
  return PlantedOutcome{success(w, task), runtime(w, task)};
}

PlantedFailMode PlantedEnv::fail_mode(const Workflow& w, const Task& task) const {
  return hash01(seed_, "failmode", canonical_string(w), task.task_id) < 0.5
             ? PlantedFailMode::WrongResult
             : PlantedFailMode::InvalidSql;
}

std::string PlantedEnv::final_sql(const Workflow& w, const Task& task) const {
  if (success(w, task)) return task.gold_sql;
  std::uint64_t key =
      derive_key(mix64(seed_), "failsql", canonical_string(w), task.task_id);
  if (fail_mode(w, task) == PlantedFailMode::WrongResult) {
    return "SELECT 'wrong_" + hex16(key) + "'";
  }
  return "SELEC 'broken_" + hex16(key) + "'";
}

double PlantedEnv::selector_score(const Task& task, const std::string& candidate_sql) const {
  return 0.5 * hash01(seed_, "selscore", task.task_id, candidate_sql);
}

double PlantedEnv::staged_total(const Workflow& w, const Task& task,
                                double timeout_seconds) const {
  PlantedOutcome o = outcome(w, task);
  double total = 0.5;  // format gate: the workflow itself is well formed
  if (o.runtime_seconds > timeout_seconds) return total - 0.5;
  // timeout gate passed: contributes 0
  if (!o.success) {
    if (fail_mode(w, task) == PlantedFailMode::InvalidSql) return total - 1.0;
    return total + 1.0 - 1.5;
  }
  double time_reward = 0.5 * (timeout_seconds - o.runtime_seconds) / timeout_seconds;
  return total + 1.0 + 1.5 + std::clamp(time_reward, 0.0, 0.5);
}

const Workflow& PlantedEnv::best_workflow(const Task& task, double timeout_seconds) const {
  if (workflows_.empty()) {
    throw WorkflowError(WorkflowError::Code::Invalid, "environment has no workflows");
  }
  std::size_t best = 0;
  double best_total = staged_total(workflows_[0], task, timeout_seconds);
  for (std::size_t i = 1; i < workflows_.size(); ++i) {
    double t = staged_total(workflows_[i], task, timeout_seconds);
    if (t > best_total) {
      best_total = t;
      best = i;
    }
  }
  return workflows_[best];
}

std::pair<OutcomeMatrix, RuntimeMatrix> PlantedEnv::materialize() const {
  OutcomeMatrix y;
  RuntimeMatrix t;
  for (const auto& w : workflows_) y.workflows.push_back(canonical_string(w));
  for (const auto& task : tasks_) y.tasks.push_back(task.task_id);
  t.workflows = y.workflows;
  t.tasks = y.tasks;
  const auto k = static_cast<Eigen::Index>(workflows_.size());
  const auto q = static_cast<Eigen::Index>(tasks_.size());
  y.bits.resize(k, q);
  t.values.resize(k, q);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      PlantedOutcome o =
          outcome(workflows_[static_cast<std::size_t>(i)], tasks_[static_cast<std::size_t>(j)]);
      y.bits(i, j) = o.success ? 1.0 : 0.0;
      t.values(i, j) = o.runtime_seconds;
    }
  }
  return {std::move(y), std::move(t)};
}

json PlantedEnv::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["seed"] = seed_;
  j["h"] = h_;
  j["registry"] = registry_to_json(registry_);
  json tasks = json::array();
  for (const auto& t : tasks_) {
    tasks.push_back({{"task_id", t.task_id}, {"difficulty", difficulty_name(t.difficulty)}});
  }
  j["tasks"] = tasks;
  j["base_accuracy"] = base_accuracy_;
  json means;
  for (const auto& [role, mean] : runtime_model_.role_mean_seconds) {
    means[std::string(role_name(role))] = mean;
  }
  j["runtime_model"] = {{"role_mean_seconds", means},
                        {"noise_lo", runtime_model_.noise_lo},
                        {"noise_hi", runtime_model_.noise_hi}};
  j["unsolvable_fraction"] = unsolvable_fraction_;
  return j;
}

PlantedEnv PlantedEnv::from_json(const json& j) {
  if (j.value("schema_version", 0) != 1) {
    throw WorkflowError(WorkflowError::Code::Invalid, "unsupported environment schema_version");
  }
  Registry reg = registry_from_json(j.at("registry"));
  std::vector<Task> tasks;
  for (const auto& jt : j.at("tasks")) {
    tasks.push_back(planted_task(jt.at("task_id").get<std::string>(),
                                 difficulty_from_name(jt.at("difficulty").get<std::string>())));
  }
  std::map<std::string, double> bases = j.at("base_accuracy").get<std::map<std::string, double>>();
  RuntimeModel rm;
  const auto& jrm = j.at("runtime_model");
  for (const auto& [name, mean] : jrm.at("role_mean_seconds").items()) {
    rm.role_mean_seconds[role_from_name(name)] = mean.get<double>();
  }
  rm.noise_lo = jrm.at("noise_lo").get<double>();
  rm.noise_hi = jrm.at("noise_hi").get<double>();
  return PlantedEnv(std::move(reg), std::move(tasks), j.at("seed").get<std::uint64_t>(),
                    j.at("h").get<double>(), std::move(bases), std::move(rm),
                    j.value("unsolvable_fraction", 0.0));
}

PlantedEnv PlantedEnv::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw WorkflowError(WorkflowError::Code::Invalid, "cannot open environment file: " + path);
  }
  json j;
  in >> j;
  return from_json(j);
}

void PlantedEnv::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw WorkflowError(WorkflowError::Code::Invalid, "cannot write environment file: " + path);
  }
  out << to_json().dump(2) << "\n";
}

PlantedEnv plant_env(std::uint64_t seed, int k_templates, int q_tasks, double h,
                     RuntimeModel runtime_model, PlantOptions options) {
  if (q_tasks < 1) {
    throw WorkflowError(WorkflowError::Code::Invalid, "q_tasks must be >= 1");
  }
  auto all = builtin_templates();
  std::sort(all.begin(), all.end(), complexity_less);
  if (k_templates < 1 || k_templates > static_cast<int>(all.size())) {
    throw WorkflowError(WorkflowError::Code::Invalid,
                        "k_templates must lie in [1, " + std::to_string(all.size()) + "]");
  }
  all.resize(static_cast<std::size_t>(k_templates));

  ActorPool pool =
      options.pool_spec.empty() ? synthetic_pool(1) : synthetic_pool(options.pool_spec);

  std::vector<Task> tasks;
  tasks.reserve(static_cast<std::size_t>(q_tasks));
  for (int i = 0; i < q_tasks; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "q%04d", i);
    tasks.push_back(planted_task(buf, kAllDifficulties[static_cast<std::size_t>(i) % 4]));
  }

  return PlantedEnv(Registry{std::move(pool), std::move(all)}, std::move(tasks), seed, h,
                    options.base_accuracy, std::move(runtime_model),
                    options.unsolvable_fraction);
}

ExecuteResult PlantedBackend::execute(const std::string& sql, const std::string& /*db_ref*/,
                                      double /*budget_seconds*/) {
  std::size_t b = sql.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return BackendError{"empty statement"};
  std::size_t e = sql.find_last_not_of(" \t\r\n;");
  std::string body = sql.substr(b, e == std::string::npos ? std::string::npos : e - b + 1);
  std::string head = body.substr(0, 6);
  std::transform(head.begin(), head.end(), head.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (head != "SELECT") return BackendError{"syntax error near '" + body.substr(0, 12) + "'"};
  ResultSet rs;
  rs.columns = {"result"};
  rs.rows = {{Value{body}}};
  return rs;
}

OutcomeTableEnumerator::OutcomeTableEnumerator(int k, int q) : k_(k), q_(q) {
  if (k < 1 || q < 1 || k * q > 20) {
    throw WorkflowError(WorkflowError::Code::Invalid,
                        "outcome table enumeration requires 1 <= K*Q <= 20");
  }
}

OutcomeMatrix OutcomeTableEnumerator::table(std::uint64_t index) const {
  OutcomeMatrix y;
  for (int i = 0; i < k_; ++i) y.workflows.push_back("w" + std::to_string(i));
  for (int j = 0; j < q_; ++j) y.tasks.push_back("q" + std::to_string(j));
  y.bits.resize(k_, q_);
  for (int i = 0; i < k_; ++i) {
    for (int j = 0; j < q_; ++j) {
      y.bits(i, j) = static_cast<double>((index >> (i * q_ + j)) & 1u);
    }
  }
  return y;
}

GapReport brute_force_report(const OutcomeMatrix& y,
                             const std::optional<Eigen::VectorXd>& weights) {
  return gap_report(y, weights);
}

}  // namespace dynflow
