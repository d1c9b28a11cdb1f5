#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "dynflow/registry.hpp"
#include "dynflow/reward.hpp"
#include "dynflow/rng.hpp"
#include "dynflow/synth_env.hpp"
#include "dynflow/workflow.hpp"

namespace dynflow {

inline constexpr double kDefaultCrossGain = 3.0;

// Feature blocks, in order:
//   [difficulty one-hot 4][template one-hot T][actor indicators P]
//   [stage count / max stages][max parallel width / max width]
//   [difficulty x template cross 4T][bias 1]
// The cross block is what lets the softmax prefer different templates per
// difficulty; purely additive context features cancel out of the softmax.
// Its entries carry a constant gain: the shared template/actor slots collect
// gradient from every difficulty, so per-difficulty preferences need a
// faster-moving coordinate to be able to reorder the argmax.
struct FeatureLayout {
  std::vector<std::string> template_ids;  // registry order
  std::vector<std::string> actor_ids;     // pool order
  int max_stages = 1;
  int max_width = 1;
  double cross_gain = kDefaultCrossGain;

  Eigen::Index template_count() const { return static_cast<Eigen::Index>(template_ids.size()); }
  Eigen::Index actor_count() const { return static_cast<Eigen::Index>(actor_ids.size()); }
  Eigen::Index dim() const { return 4 + template_count() + actor_count() + 2 + 4 * template_count() + 1; }

  static FeatureLayout from_registry(const Registry& reg,
                                     double cross_gain = kDefaultCrossGain);
  nlohmann::json to_json() const;
  static FeatureLayout from_json(const nlohmann::json& j);
};

class Featurizer {
 public:
  explicit Featurizer(const Registry& reg, double cross_gain = kDefaultCrossGain);

  const FeatureLayout& layout() const { return layout_; }
  Eigen::VectorXd operator()(const Task& task, const Workflow& w) const;
  Eigen::MatrixXd matrix(const Task& task, std::span<const Workflow> candidates) const;

 private:
  const Registry& reg_;
  FeatureLayout layout_;
  std::map<std::string, Eigen::Index, std::less<>> template_index_;
  std::map<std::string, Eigen::Index, std::less<>> actor_index_;
};

// Softmax of <theta, row features>, max-subtracted for stability.
Eigen::VectorXd policy_distribution(const Eigen::VectorXd& theta, const Eigen::MatrixXd& features);

using MaskSchedule = std::map<Difficulty, double>;

MaskSchedule default_mask_schedule();   // easy .5, moderate .65, complex .8, highly_complex .95
MaskSchedule full_retention_schedule(); // all 1.0 (masking off)

// Bernoulli(r) per actor, redrawn until at least one workflow is admissible.
MaskVector sample_mask(const ActorPool& pool, const MaskSchedule& schedule, Difficulty difficulty,
                       std::span<const Template> templates, SplitMix64& rng);

struct GrpoConfig {
  int group_size = 5;      // G
  double clip_eps = 0.2;   // epsilon
  double kl_beta = 0.01;   // beta
  double learning_rate = 0.05;
  int steps = 2000;
  std::uint64_t seed = 0;
  MaskSchedule mask_schedule = default_mask_schedule();
  double pseudo_probability = 0.0;  // p
  double judge_noise = 0.0;         // eta
  double timeout_seconds = 300.0;
  int worker_cap = 1;
  double cross_gain = kDefaultCrossGain;

  nlohmann::json to_json() const;
  static GrpoConfig from_json(const nlohmann::json& j);
};

struct RolloutGroup {
  std::string task_id;
  MaskVector mask;
  std::vector<Workflow> candidates;  // the masked workflow space, canonical order
  std::vector<int> chosen;           // G indices into candidates
  Eigen::VectorXd old_probs;         // sampling-time probabilities, (0,1]
  Eigen::VectorXd rewards;
  Eigen::VectorXd advantages;
  std::vector<int> lambdas;          // 1 = real reward, 0 = pseudo
};

struct RolloutResult {
  double reward = 0.0;
  int lambda = 1;
};

// Thread-safe when rollouts run in parallel; each call owns its rng stream.
using RolloutEvaluator =
    std::function<RolloutResult(const Workflow&, const Task&, SplitMix64&)>;

RolloutGroup rollout_group(const Eigen::VectorXd& theta_old, const Task& task,
                           const GrpoConfig& cfg, const Registry& reg, const Featurizer& feat,
                           const RolloutEvaluator& evaluate, SplitMix64& rng);

// (R_i - mean) / population std; all zeros when std < 1e-8.
Eigen::VectorXd group_advantages(const Eigen::VectorXd& rewards);

struct GrpoResult {
  double loss = 0.0;
  Eigen::VectorXd grad;
  double surrogate = 0.0;
  double kl = 0.0;
};

// Clipped surrogate with exact categorical KL against the frozen reference;
// each rollout is one decision, so the importance ratio has a single factor.
// grad is the exact analytic gradient of loss in theta.
GrpoResult grpo_loss_and_grad(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_ref,
                              const RolloutGroup& group, const Eigen::MatrixXd& features,
                              const GrpoConfig& cfg);

struct TraceRow {
  int step = 0;
  double mean_reward = 0.0;
  double holdout_ex = 0.0;
  double kl = 0.0;
  double mask_r = 1.0;
};

struct TrainResult {
  Eigen::VectorXd theta;
  Eigen::VectorXd theta_ref;
  FeatureLayout layout;
  std::vector<TraceRow> trace;
};

// GRPO over a planted environment: even-index tasks train, odd-index tasks
// are the held-out slice; theta_old refreshes every step, theta_ref stays at
// initialization.
TrainResult train(const GrpoConfig& cfg, const PlantedEnv& env);

// Greedy EX over tasks at retention r: r = 1 evaluates the full space once
// per task; r < 1 averages over `repetitions` freshly sampled masks.
double evaluate_policy_ex(const Eigen::VectorXd& theta, const PlantedEnv& env,
                          std::span<const Task> tasks, double retention_r, int repetitions,
                          std::uint64_t eval_seed, double cross_gain = kDefaultCrossGain);

void save_checkpoint(const TrainResult& result, const GrpoConfig& cfg, const std::string& path);
void write_trace_csv(std::span<const TraceRow> trace, const std::string& path);

}  // namespace dynflow
