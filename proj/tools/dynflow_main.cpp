#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dynflow/analysis.hpp"
#include "dynflow/engine.hpp"
#include "dynflow/io.hpp"
#include "dynflow/matrices.hpp"
#include "dynflow/miner.hpp"
#include "dynflow/policy.hpp"
#include "dynflow/registry.hpp"
#include "dynflow/sqlite_backend.hpp"
#include "dynflow/synth_env.hpp"

namespace fs = std::filesystem;
using namespace dynflow;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw InputError("missing input file: " + path);
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::vector<Task> load_tasks_file(const std::string& path) {
  require_file(path);
  std::ifstream in(path);
  json j;
  in >> j;
  std::vector<Task> tasks;
  for (const auto& jt : j.at("tasks")) {
    Task t;
    t.task_id = jt.at("task_id").get<std::string>();
    t.question = jt.value("question", "");
    t.db_ref = jt.at("db_ref").get<std::string>();
    t.knowledge = jt.value("knowledge", "");
    t.gold_sql = jt.at("gold_sql").get<std::string>();
    t.difficulty = difficulty_from_name(jt.value("difficulty", "easy"));
    tasks.push_back(std::move(t));
  }
  if (tasks.empty()) throw InputError("task file holds no tasks: " + path);
  return tasks;
}

struct AnalysisInputs {
  std::string outcomes, runtimes, logs;
  bool lenient = false;

  std::pair<OutcomeMatrix, RuntimeMatrix> load() const {
    if (!logs.empty()) {
      require_file(logs);
      return matrices_from_logs(logs, lenient);
    }
    if (outcomes.empty() || runtimes.empty()) {
      throw ConfigError("provide either --logs or both --outcomes and --runtimes");
    }
    require_file(outcomes);
    require_file(runtimes);
    auto y = outcome_matrix_from_csv(outcomes);
    auto t = runtime_matrix_from_csv(runtimes);
    if (y.workflows != t.workflows || y.tasks != t.tasks) {
      throw InputError("outcome and runtime matrices disagree on labels");
    }
    return {std::move(y), std::move(t)};
  }
};

int run_simulate(std::uint64_t seed, double h, int k, int q, int actors_per_role,
                 const std::string& out_dir) {
  fs::create_directories(out_dir);
  PlantOptions opts;
  if (actors_per_role > 1) {
    for (ActorRole role : kAllRoles) opts.pool_spec.emplace_back(role, actors_per_role);
  }
  PlantedEnv env = plant_env(seed, k, q, h, RuntimeModel::defaults(), opts);
  env.save(out_dir + "/env.json");
  auto [y, t] = env.materialize();
  write_matrix_csv(out_dir + "/outcomes.csv", y.workflows, y.tasks, y.bits);
  write_matrix_csv(out_dir + "/runtimes.csv", t.workflows, t.tasks, t.values);
  std::cout << "simulate: " << y.k() << " workflows x " << y.q() << " tasks -> " << out_dir
            << "\n";
  return 0;
}

int run_run(const std::string& env_path, const std::string& registry_path,
            const std::string& tasks_path, const std::string& out_path, double timeout,
            int workers, bool deterministic, bool append) {
  std::unique_ptr<PlantedEnv> env;
  std::unique_ptr<Registry> real_registry;
  std::unique_ptr<RelationalBackend> backend;
  std::vector<Task> tasks;

  if (!env_path.empty()) {
    require_file(env_path);
    env = std::make_unique<PlantedEnv>(PlantedEnv::load(env_path));
    backend = std::make_unique<PlantedBackend>();
    tasks = env->tasks();
  } else {
    if (registry_path.empty() || tasks_path.empty()) {
      throw ConfigError("run needs --env, or --registry with --tasks");
    }
    require_file(registry_path);
    real_registry = std::make_unique<Registry>(load_registry(registry_path));
    backend = std::make_unique<SqliteBackend>();
    tasks = load_tasks_file(tasks_path);
  }

  const Registry& reg = env ? env->registry() : *real_registry;
  EngineConfig ecfg;
  ecfg.timeout_seconds = timeout;
  ecfg.worker_cap = workers;
  ExecEngine engine(reg, *backend, ecfg);
  if (env) engine.bind_environment(env.get());

  auto workflows = enumerate_workflows(reg.templates, reg.pool, MaskVector::all_ones(reg.pool));
  if (workflows.empty()) throw InputError("registry admits no workflows");

  const std::string mask_bits = MaskVector::all_ones(reg.pool).bits_string();
  RewardConfig rcfg;
  rcfg.timeout_seconds = timeout;

  const std::size_t n = workflows.size() * tasks.size();
  std::vector<LogRecord> records(n);
  parallel_for(n, workers, [&](std::size_t idx) {
    const Workflow& w = workflows[idx / tasks.size()];
    const Task& task = tasks[idx % tasks.size()];
    ExecutionRecord rec = engine.run_workflow(w, task);
    RewardBreakdown breakdown = staged_reward(true, rec, rcfg);
    LogRecord log;
    log.timestamp = deterministic ? 0.0 : now_seconds();
    log.task_id = task.task_id;
    log.workflow = canonical_string(w);
    log.mask_bits = mask_bits;
    log.stage = rec.stage;
    log.elapsed_seconds = rec.elapsed_seconds;
    log.reward = breakdown;
    log.total = breakdown.total;
    log.lambda = 1;
    records[idx] = std::move(log);
  });

  LogWriter writer(out_path, append);
  for (const auto& rec : records) writer.write(rec);
  std::cout << "run: " << n << " executions -> " << out_path << "\n";
  return 0;
}

int run_analyze(const AnalysisInputs& inputs, const std::string& out_dir) {
  auto [y, t] = inputs.load();
  fs::create_directories(out_dir);
  GapReport gap = gap_report(y);
  write_gap_report(gap, out_dir + "/gap_report.json");
  DistanceMatrix dm = distance_matrix(y, t);
  write_distance_matrix_csv(dm, out_dir + "/distance_matrix.csv");
  std::cout << "analyze: ex_static=" << gap.ex_static << " ex_dynamic=" << gap.ex_dynamic
            << " delta=" << gap.delta << " -> " << out_dir << "\n";
  return 0;
}

int run_report(const AnalysisInputs& inputs, const std::string& out_dir) {
  auto [y, t] = inputs.load();
  fs::create_directories(out_dir);
  write_efficiency_report_csv(efficiency_report(y, t), out_dir + "/efficiency_report.csv");
  write_pareto_csv(pareto_points(y, t), out_dir + "/pareto.csv");
  std::cout << "report: efficiency + pareto -> " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& env_path, const GrpoConfig& cfg, const std::string& out_dir) {
  require_file(env_path);
  PlantedEnv env = PlantedEnv::load(env_path);
  fs::create_directories(out_dir);
  TrainResult result = train(cfg, env);
  save_checkpoint(result, cfg, out_dir + "/checkpoint.json");
  write_trace_csv(result.trace, out_dir + "/trace.csv");
  double final_ex = result.trace.empty() ? 0.0 : result.trace.back().holdout_ex;
  std::cout << "train: " << cfg.steps << " steps, final holdout EX " << final_ex << " -> "
            << out_dir << "\n";
  return 0;
}

int run_mine(const std::string& env_path, int budget, std::uint64_t seed, double timeout,
             const std::string& out_path) {
  require_file(env_path);
  PlantedEnv env = PlantedEnv::load(env_path);
  PlantedBackend backend;
  EngineConfig ecfg;
  ecfg.timeout_seconds = timeout;
  ExecEngine engine(env.registry(), backend, ecfg);
  engine.bind_environment(&env);

  FilterOutcome filtered = filter_trivial(env.tasks(), engine);
  MinerConfig mcfg;
  mcfg.per_template_budget = budget;
  mcfg.seed = seed;

  std::vector<SupervisionRecord> records;
  std::size_t deferred = 0;
  for (const auto& task : filtered.kept) {
    MineResult res = mine(task, mcfg, engine);
    if (const auto* rec = std::get_if<SupervisionRecord>(&res)) {
      records.push_back(*rec);
    } else {
      ++deferred;
    }
  }
  write_supervision_jsonl(records, out_path);
  std::cout << "mine: " << records.size() << " mined, " << deferred << " deferred, "
            << filtered.dropped_trivial.size() << " trivial, "
            << filtered.dropped_invalid_gold.size() << " invalid-gold -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynflow: dynamic Text-to-SQL workflow construction toolkit"};
  app.set_help_flag("--help", "print usage");  // frees -h for the heterogeneity knob
  app.require_subcommand(1);
  int exit_code = 0;

  // simulate
  auto* sim = app.add_subcommand("simulate", "emit a planted environment and its matrices");
  std::uint64_t sim_seed = 7;
  double sim_h = 1.0;
  int sim_k = 10, sim_q = 200, sim_apr = 1;
  std::string sim_out = ".";
  sim->add_option("--seed", sim_seed, "environment seed");
  sim->add_option("--h", sim_h, "heterogeneity in [0,1]")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--k", sim_k, "number of templates (simplest first)")->check(CLI::Range(1, 10));
  sim->add_option("--q", sim_q, "number of tasks")->check(CLI::PositiveNumber);
  sim->add_option("--actors-per-role", sim_apr, "synthetic pool size per role")
      ->check(CLI::PositiveNumber);
  sim->add_option("--out-dir", sim_out, "output directory");
  sim->callback([&]() { exit_code = run_simulate(sim_seed, sim_h, sim_k, sim_q, sim_apr, sim_out); });

  // run
  auto* run = app.add_subcommand("run", "execute workflows over tasks into a JSONL log");
  std::string run_env, run_registry, run_tasks, run_out = "logs.jsonl";
  double run_timeout = 300.0;
  int run_workers = default_worker_cap(1);
  bool run_det = false, run_append = false;
  run->add_option("--env", run_env, "planted environment file");
  run->add_option("--registry", run_registry, "actor/template registry (real backend mode)");
  run->add_option("--tasks", run_tasks, "tasks JSON file (real backend mode)");
  run->add_option("--out", run_out, "output JSONL path");
  run->add_option("--timeout", run_timeout, "workflow timeout seconds")->check(CLI::PositiveNumber);
  run->add_option("--workers", run_workers, "worker cap")->check(CLI::PositiveNumber);
  run->add_flag("--deterministic", run_det, "zero timestamps for byte-stable output");
  run->add_flag("--append", run_append, "append to the log instead of truncating");
  run->callback([&]() {
    exit_code = run_run(run_env, run_registry, run_tasks, run_out, run_timeout, run_workers,
                        run_det, run_append);
  });

  // analyze
  auto* analyze = app.add_subcommand("analyze", "gap report and distance matrix");
  AnalysisInputs an_in;
  std::string an_out = ".";
  analyze->add_option("--outcomes", an_in.outcomes, "outcome matrix CSV");
  analyze->add_option("--runtimes", an_in.runtimes, "runtime matrix CSV");
  analyze->add_option("--logs", an_in.logs, "execution log JSONL");
  analyze->add_flag("--lenient", an_in.lenient, "skip corrupt log lines");
  analyze->add_option("--out-dir", an_out, "output directory");
  analyze->callback([&]() { exit_code = run_analyze(an_in, an_out); });

  // report
  auto* report = app.add_subcommand("report", "plot-ready efficiency and pareto CSVs");
  AnalysisInputs rp_in;
  std::string rp_out = ".";
  report->add_option("--outcomes", rp_in.outcomes, "outcome matrix CSV");
  report->add_option("--runtimes", rp_in.runtimes, "runtime matrix CSV");
  report->add_option("--logs", rp_in.logs, "execution log JSONL");
  report->add_flag("--lenient", rp_in.lenient, "skip corrupt log lines");
  report->add_option("--out-dir", rp_out, "output directory");
  report->callback([&]() { exit_code = run_report(rp_in, rp_out); });

  // train
  auto* train_cmd = app.add_subcommand("train", "GRPO training on a planted environment");
  std::string tr_env, tr_out = ".";
  GrpoConfig tr_cfg;
  bool tr_no_masking = false;
  tr_cfg.worker_cap = default_worker_cap(1);
  train_cmd->add_option("--env", tr_env, "planted environment file")->required();
  train_cmd->add_option("--steps", tr_cfg.steps, "training steps")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr_cfg.seed, "training seed");
  train_cmd->add_option("--group-size", tr_cfg.group_size, "rollouts per group (G)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr_cfg.learning_rate, "learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--clip", tr_cfg.clip_eps, "clip epsilon")->check(CLI::Range(1e-9, 0.999999));
  train_cmd->add_option("--beta", tr_cfg.kl_beta, "KL coefficient")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--pseudo-p", tr_cfg.pseudo_probability, "pseudo reward probability p");
  train_cmd->add_option("--judge-eta", tr_cfg.judge_noise, "synthetic judge flip probability");
  train_cmd->add_option("--timeout", tr_cfg.timeout_seconds, "workflow timeout seconds");
  train_cmd->add_option("--workers", tr_cfg.worker_cap, "worker cap")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--no-masking", tr_no_masking, "train with the full actor pool");
  train_cmd->add_option("--out-dir", tr_out, "output directory");
  train_cmd->callback([&]() {
    if (tr_cfg.pseudo_probability < 0.0 || tr_cfg.pseudo_probability >= 1.0) {
      throw ConfigError("--pseudo-p must lie in [0,1)");
    }
    if (tr_no_masking) tr_cfg.mask_schedule = full_retention_schedule();
    exit_code = run_train(tr_env, tr_cfg, tr_out);
  });

  // mine
  auto* mine_cmd = app.add_subcommand("mine", "mine supervision records from an environment");
  std::string mn_env, mn_out = "supervision.jsonl";
  int mn_budget = 64;
  std::uint64_t mn_seed = 0;
  double mn_timeout = 300.0;
  mine_cmd->add_option("--env", mn_env, "planted environment file")->required();
  mine_cmd->add_option("--budget", mn_budget, "assignments tried per template")
      ->check(CLI::PositiveNumber);
  mine_cmd->add_option("--seed", mn_seed, "sampling seed for over-budget templates");
  mine_cmd->add_option("--timeout", mn_timeout, "workflow timeout seconds");
  mine_cmd->add_option("--out", mn_out, "output JSONL path");
  mine_cmd->callback(
      [&]() { exit_code = run_mine(mn_env, mn_budget, mn_seed, mn_timeout, mn_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "error: input: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 4;
  }
  return exit_code;
}
