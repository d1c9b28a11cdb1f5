#include "dynflow/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

namespace dynflow {

using nlohmann::json;

FeatureLayout FeatureLayout::from_registry(const Registry& reg, double cross_gain) {
  FeatureLayout layout;
  layout.cross_gain = cross_gain;
  for (const auto& t : reg.templates) {
    layout.template_ids.push_back(t.id);
    layout.max_stages = std::max(layout.max_stages, t.stage_count());
    layout.max_width = std::max(layout.max_width, t.max_parallel_width());
  }
  for (const auto& a : reg.pool.actors()) layout.actor_ids.push_back(a.id);
  return layout;
}

json FeatureLayout::to_json() const {
  return {{"template_ids", template_ids},
          {"actor_ids", actor_ids},
          {"max_stages", max_stages},
          {"max_width", max_width},
          {"cross_gain", cross_gain}};
}

FeatureLayout FeatureLayout::from_json(const json& j) {
  FeatureLayout layout;
  layout.template_ids = j.at("template_ids").get<std::vector<std::string>>();
  layout.actor_ids = j.at("actor_ids").get<std::vector<std::string>>();
  layout.max_stages = j.at("max_stages").get<int>();
  layout.max_width = j.at("max_width").get<int>();
  layout.cross_gain = j.value("cross_gain", kDefaultCrossGain);
  return layout;
}

Featurizer::Featurizer(const Registry& reg, double cross_gain)
    : reg_(reg), layout_(FeatureLayout::from_registry(reg, cross_gain)) {
  for (Eigen::Index i = 0; i < layout_.template_count(); ++i) {
    template_index_.emplace(layout_.template_ids[static_cast<std::size_t>(i)], i);
  }
  for (Eigen::Index i = 0; i < layout_.actor_count(); ++i) {
    actor_index_.emplace(layout_.actor_ids[static_cast<std::size_t>(i)], i);
  }
}

Eigen::VectorXd Featurizer::operator()(const Task& task, const Workflow& w) const {
  const Eigen::Index t_count = layout_.template_count();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(layout_.dim());

  const Eigen::Index d = static_cast<Eigen::Index>(task.difficulty);
  v(d) = 1.0;

  auto t_it = template_index_.find(w.template_id);
  if (t_it == template_index_.end()) {
    throw WorkflowError(WorkflowError::Code::UnknownTemplate,
                        "featurize: unknown template " + w.template_id);
  }
  const Eigen::Index t_idx = t_it->second;
  v(4 + t_idx) = 1.0;

  for (const auto& id : w.assignment) {
    auto a_it = actor_index_.find(id);
    if (a_it == actor_index_.end()) {
      throw WorkflowError(WorkflowError::Code::UnknownActor, "featurize: unknown actor " + id);
    }
    v(4 + t_count + a_it->second) = 1.0;  // indicator, duplicates collapse
  }

  const Template* tpl = reg_.find_template(w.template_id);
  v(4 + t_count + layout_.actor_count()) =
      static_cast<double>(tpl->stage_count()) / layout_.max_stages;
  v(4 + t_count + layout_.actor_count() + 1) =
      static_cast<double>(tpl->max_parallel_width()) / layout_.max_width;

  const Eigen::Index cross_base = 4 + t_count + layout_.actor_count() + 2;
  v(cross_base + d * t_count + t_idx) = layout_.cross_gain;

  v(layout_.dim() - 1) = 1.0;  // bias
  return v;
}

Eigen::MatrixXd Featurizer::matrix(const Task& task, std::span<const Workflow> candidates) const {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(candidates.size()), layout_.dim());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    f.row(static_cast<Eigen::Index>(i)) = (*this)(task, candidates[i]).transpose();
  }
  return f;
}

Eigen::VectorXd policy_distribution(const Eigen::VectorXd& theta, const Eigen::MatrixXd& features) {
  if (features.rows() == 0) {
    throw WorkflowError(WorkflowError::Code::Invalid, "policy over empty candidate list");
  }
  Eigen::VectorXd scores = features * theta;
  Eigen::VectorXd exps = (scores.array() - scores.maxCoeff()).exp();
  return exps / exps.sum();
}

MaskSchedule default_mask_schedule() {
  return {{Difficulty::Easy, 0.5},
          {Difficulty::Moderate, 0.65},
          {Difficulty::Complex, 0.8},
          {Difficulty::HighlyComplex, 0.95}};
}

MaskSchedule full_retention_schedule() {
  MaskSchedule s;
  for (Difficulty d : kAllDifficulties) s[d] = 1.0;
  return s;
}

MaskVector sample_mask(const ActorPool& pool, const MaskSchedule& schedule, Difficulty difficulty,
                       std::span<const Template> templates, SplitMix64& rng) {
  auto it = schedule.find(difficulty);
  if (it == schedule.end() || it->second <= 0.0 || it->second > 1.0) {
    throw WorkflowError(WorkflowError::Code::Invalid,
                        "mask schedule needs retention in (0,1] for every difficulty");
  }
  const double r = it->second;
  if (r == 1.0) return MaskVector::all_ones(pool);

  if (enumerate_workflows(templates, pool, MaskVector::all_ones(pool)).empty()) {
    throw WorkflowError(WorkflowError::Code::Invalid,
                        "no workflow is admissible even with the full pool");
  }
  while (true) {
    std::vector<bool> bits(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) bits[i] = rng.bernoulli(r);
    MaskVector mask = MaskVector::from_bits(pool, bits);
    if (!enumerate_workflows(templates, pool, mask).empty()) return mask;
  }
}

json GrpoConfig::to_json() const {
  json schedule;
  for (const auto& [d, r] : mask_schedule) schedule[std::string(difficulty_name(d))] = r;
  return {{"group_size", group_size},
          {"clip_eps", clip_eps},
          {"kl_beta", kl_beta},
          {"learning_rate", learning_rate},
          {"steps", steps},
          {"seed", seed},
          {"mask_schedule", schedule},
          {"pseudo_probability", pseudo_probability},
          {"judge_noise", judge_noise},
          {"timeout_seconds", timeout_seconds},
          {"worker_cap", worker_cap},
          {"cross_gain", cross_gain}};
}

GrpoConfig GrpoConfig::from_json(const json& j) {
  GrpoConfig cfg;
  cfg.group_size = j.value("group_size", cfg.group_size);
  cfg.clip_eps = j.value("clip_eps", cfg.clip_eps);
  cfg.kl_beta = j.value("kl_beta", cfg.kl_beta);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("mask_schedule")) {
    cfg.mask_schedule.clear();
    for (const auto& [name, r] : j.at("mask_schedule").items()) {
      cfg.mask_schedule[difficulty_from_name(name)] = r.get<double>();
    }
  }
  cfg.pseudo_probability = j.value("pseudo_probability", cfg.pseudo_probability);
  cfg.judge_noise = j.value("judge_noise", cfg.judge_noise);
  cfg.timeout_seconds = j.value("timeout_seconds", cfg.timeout_seconds);
  cfg.worker_cap = j.value("worker_cap", cfg.worker_cap);
  cfg.cross_gain = j.value("cross_gain", cfg.cross_gain);
  return cfg;
}

Eigen::VectorXd group_advantages(const Eigen::VectorXd& rewards) {
  if (rewards.size() < 1) {
    throw WorkflowError(WorkflowError::Code::Invalid, "group_advantages needs G >= 1");
  }
  const double mu = rewards.mean();
  const double var = (rewards.array() - mu).square().mean();  // population
  const double sigma = std::sqrt(var);
  if (sigma < 1e-8) return Eigen::VectorXd::Zero(rewards.size());
  return (rewards.array() - mu) / sigma;
}

RolloutGroup rollout_group(const Eigen::VectorXd& theta_old, const Task& task,
                           const GrpoConfig& cfg, const Registry& reg, const Featurizer& feat,
                           const RolloutEvaluator& evaluate, SplitMix64& rng) {
  if (cfg.group_size < 1) {
    throw WorkflowError(WorkflowError::Code::Invalid, "group_size must be >= 1");
  }
  RolloutGroup g;
  g.task_id = task.task_id;
  g.mask = sample_mask(reg.pool, cfg.mask_schedule, task.difficulty, reg.templates, rng);
  g.candidates = enumerate_workflows(reg.templates, reg.pool, g.mask);

  Eigen::MatrixXd features = feat.matrix(task, g.candidates);
  Eigen::VectorXd probs = policy_distribution(theta_old, features);

  const int G = cfg.group_size;
  g.chosen.resize(static_cast<std::size_t>(G));
  g.old_probs.resize(G);
  for (int k = 0; k < G; ++k) {
    double u = rng.next_unit01();
    double acc = 0.0;
    Eigen::Index pick = probs.size() - 1;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      acc += probs(i);
      if (u < acc) {
        pick = i;
        break;
      }
    }
    g.chosen[static_cast<std::size_t>(k)] = static_cast<int>(pick);
    g.old_probs(k) = probs(pick);
  }

  g.rewards.resize(G);
  g.lambdas.assign(static_cast<std::size_t>(G), 1);
  auto eval_one = [&](int k) {
    SplitMix64 sub = rng.split("rollout", static_cast<std::uint64_t>(k));
    RolloutResult res =
        evaluate(g.candidates[static_cast<std::size_t>(g.chosen[static_cast<std::size_t>(k)])],
                 task, sub);
    g.rewards(k) = res.reward;
    g.lambdas[static_cast<std::size_t>(k)] = res.lambda;
  };
  if (cfg.worker_cap > 1) {
    for (int base = 0; base < G; base += cfg.worker_cap) {
      std::vector<std::thread> pool;
      for (int k = base; k < std::min(G, base + cfg.worker_cap); ++k) {
        pool.emplace_back([&eval_one, k]() { eval_one(k); });
      }
      for (auto& th : pool) th.join();
    }
  } else {
    for (int k = 0; k < G; ++k) eval_one(k);
  }

  g.advantages = group_advantages(g.rewards);
  return g;
}

GrpoResult grpo_loss_and_grad(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_ref,
                              const RolloutGroup& group, const Eigen::MatrixXd& features,
                              const GrpoConfig& cfg) {
  const Eigen::Index n = features.rows();
  const int G = static_cast<int>(group.chosen.size());
  if (n != static_cast<Eigen::Index>(group.candidates.size()) || G == 0 ||
      group.old_probs.size() != G || group.advantages.size() != G) {
    throw WorkflowError(WorkflowError::Code::Invalid,
                        "grpo_loss_and_grad: candidate list does not match the rollout group");
  }

  Eigen::VectorXd p = policy_distribution(theta, features);
  Eigen::VectorXd p_ref = policy_distribution(theta_ref, features);
  Eigen::VectorXd mean_feat = features.transpose() * p;  // E_p[phi]

  const double eps = cfg.clip_eps;
  double surrogate = 0.0;
  Eigen::VectorXd grad_surr = Eigen::VectorXd::Zero(theta.size());
  for (int k = 0; k < G; ++k) {
    const Eigen::Index c = group.chosen[static_cast<std::size_t>(k)];
    const double a = group.advantages(k);
    const double ratio = p(c) / group.old_probs(k);
    const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    const double unclipped_term = ratio * a;
    const double clipped_term = clipped * a;
    if (unclipped_term <= clipped_term) {
      surrogate += unclipped_term;
      grad_surr += a * ratio * (features.row(c).transpose() - mean_feat);
    } else {
      surrogate += clipped_term;
      // clip active and selected: constant in theta
    }
  }
  surrogate /= G;
  grad_surr /= G;

  // Exact categorical KL(p || p_ref) and its gradient.
  double kl = 0.0;
  Eigen::VectorXd grad_kl = Eigen::VectorXd::Zero(theta.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double log_ratio = std::log(p(i)) - std::log(p_ref(i));
    kl += p(i) * log_ratio;
    grad_kl += p(i) * log_ratio * (features.row(i).transpose() - mean_feat);
  }

  GrpoResult res;
  res.surrogate = surrogate;
  res.kl = kl;
  res.loss = -(surrogate - cfg.kl_beta * kl);
  res.grad = -grad_surr + cfg.kl_beta * grad_kl;
  return res;
}

namespace {

// Greedy holdout EX with per-difficulty feature caching: candidate features
// only depend on the task through its difficulty.
class HoldoutEvaluator {
 public:
  HoldoutEvaluator(const PlantedEnv& env, const Featurizer& feat, std::span<const Task> tasks)
      : env_(env), tasks_(tasks) {
    for (std::size_t d = 0; d < kAllDifficulties.size(); ++d) {
      Task probe = planted_task("probe", kAllDifficulties[d]);
      features_[d] = feat.matrix(probe, env.workflows());
    }
  }

  double ex(const Eigen::VectorXd& theta) const {
    std::array<Eigen::Index, 4> pick{};
    for (std::size_t d = 0; d < 4; ++d) {
      Eigen::VectorXd scores = features_[d] * theta;
      scores.maxCoeff(&pick[d]);
      for (Eigen::Index i = 0; i < scores.size(); ++i) {  // first argmax
        if (scores(i) == scores(pick[d])) {
          pick[d] = i;
          break;
        }
      }
    }
    if (tasks_.empty()) return 0.0;
    double hits = 0.0;
    for (const auto& task : tasks_) {
      const auto& w = env_.workflows()[static_cast<std::size_t>(
          pick[static_cast<std::size_t>(task.difficulty)])];
      if (env_.success(w, task)) hits += 1.0;
    }
    return hits / static_cast<double>(tasks_.size());
  }

 private:
  const PlantedEnv& env_;
  std::span<const Task> tasks_;
  std::array<Eigen::MatrixXd, 4> features_;
};

}  // namespace

TrainResult train(const GrpoConfig& cfg, const PlantedEnv& env) {
  const Registry& reg = env.registry();
  Featurizer feat(reg, cfg.cross_gain);

  std::vector<Task> train_tasks, holdout;
  for (std::size_t i = 0; i < env.tasks().size(); ++i) {
    (i % 2 == 0 ? train_tasks : holdout).push_back(env.tasks()[i]);
  }
  if (train_tasks.empty()) {
    throw WorkflowError(WorkflowError::Code::Invalid, "training needs at least one task");
  }

  RolloutEvaluator evaluate = [&](const Workflow& w, const Task& task, SplitMix64& rng) {
    double real = env.staged_total(w, task, cfg.timeout_seconds);
    JudgeFn judge = [&]() {
      const Workflow& baseline = env.best_workflow(task, cfg.timeout_seconds);
      return synthetic_judge(env, w, baseline, task, cfg.judge_noise, cfg.timeout_seconds, rng);
    };
    MixedReward mixed = mixed_reward(real, judge, cfg.pseudo_probability, rng);
    return RolloutResult{mixed.reward, mixed.lambda};
  };

  HoldoutEvaluator holdout_eval(env, feat, holdout);

  TrainResult result;
  result.layout = feat.layout();
  result.theta = Eigen::VectorXd::Zero(feat.layout().dim());
  result.theta_ref = result.theta;
  result.trace.reserve(static_cast<std::size_t>(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    SplitMix64 step_rng(derive_key(mix64(cfg.seed), "step", static_cast<std::uint64_t>(step)));
    const Task& task = train_tasks[step_rng.uniform_index(train_tasks.size())];

    RolloutGroup group =
        rollout_group(result.theta, task, cfg, reg, feat, evaluate, step_rng);
    Eigen::MatrixXd features = feat.matrix(task, group.candidates);
    GrpoResult grpo = grpo_loss_and_grad(result.theta, result.theta_ref, group, features, cfg);

    result.theta -= cfg.learning_rate * grpo.grad;
    if (!result.theta.allFinite()) {
      throw WorkflowError(WorkflowError::Code::Invalid,
                          "training aborted: non-finite parameters at step " +
                              std::to_string(step));
    }

    TraceRow row;
    row.step = step;
    row.mean_reward = group.rewards.mean();
    row.holdout_ex = holdout_eval.ex(result.theta);
    row.kl = grpo.kl;
    row.mask_r = cfg.mask_schedule.at(task.difficulty);
    result.trace.push_back(row);
  }
  return result;
}

double evaluate_policy_ex(const Eigen::VectorXd& theta, const PlantedEnv& env,
                          std::span<const Task> tasks, double retention_r, int repetitions,
                          std::uint64_t eval_seed, double cross_gain) {
  if (tasks.empty()) return 0.0;
  const Registry& reg = env.registry();
  Featurizer feat(reg, cross_gain);
  MaskSchedule schedule;
  for (Difficulty d : kAllDifficulties) schedule[d] = retention_r;

  double total = 0.0;
  std::size_t trials = 0;
  for (const auto& task : tasks) {
    const int reps = retention_r >= 1.0 ? 1 : std::max(repetitions, 1);
    for (int rep = 0; rep < reps; ++rep) {
      SplitMix64 rng(derive_key(mix64(eval_seed), "eval", task.task_id,
                                static_cast<std::uint64_t>(rep)));
      MaskVector mask = retention_r >= 1.0
                            ? MaskVector::all_ones(reg.pool)
                            : sample_mask(reg.pool, schedule, task.difficulty, reg.templates, rng);
      auto candidates = enumerate_workflows(reg.templates, reg.pool, mask);
      Eigen::MatrixXd features = feat.matrix(task, candidates);
      Eigen::VectorXd scores = features * theta;
      Eigen::Index pick = 0;
      scores.maxCoeff(&pick);
      for (Eigen::Index i = 0; i < scores.size(); ++i) {
        if (scores(i) == scores(pick)) {
          pick = i;
          break;
        }
      }
      if (env.success(candidates[static_cast<std::size_t>(pick)], task)) total += 1.0;
      ++trials;
    }
  }
  return total / static_cast<double>(trials);
}

void save_checkpoint(const TrainResult& result, const GrpoConfig& cfg, const std::string& path) {
  json j;
  j["theta"] = std::vector<double>(result.theta.data(), result.theta.data() + result.theta.size());
  j["feature_layout"] = result.layout.to_json();
  j["step"] = cfg.steps;
  j["seed"] = cfg.seed;
  j["config"] = cfg.to_json();
  std::ofstream out(path);
  if (!out) {
    throw WorkflowError(WorkflowError::Code::Invalid, "cannot write checkpoint: " + path);
  }
  out << j.dump(2) << "\n";
}

void write_trace_csv(std::span<const TraceRow> trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw WorkflowError(WorkflowError::Code::Invalid, "cannot write trace: " + path);
  }
  out << "step,mean_reward,holdout_ex,kl,mask_r\n";
  char buf[160];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,%.12g\n", row.step, row.mean_reward,
                  row.holdout_ex, row.kl, row.mask_r);
    out << buf;
  }
}

}  // namespace dynflow
