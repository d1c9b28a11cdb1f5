#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>

#include "dynflow/exec.hpp"
#include "dynflow/rng.hpp"
#include "dynflow/synth_env.hpp"

namespace dynflow {

// Five staged components; a component is present exactly when its gate was
// reached, and evaluation stops at the first failing gate.
//   format +-0.5 | timeout {0,-0.5} | execution +-1 | result +-1.5 | time [0,0.5]
struct RewardBreakdown {
  double format = 0.0;
  std::optional<double> timeout_pen;
  std::optional<double> execution;
  std::optional<double> result;
  std::optional<double> time;
  double total = 0.0;
};

struct RewardConfig {
  double timeout_seconds = 300.0;  // the paper's 5 minutes
  double pseudo_probability = 0.0;  // p in [0,1)
  double judge_noise = 0.0;         // synthetic judge flip probability
};

// Pairwise judge verdict after post-processing: a raw NOT_BETTER with
// confidence below 0.3 is flipped to preferred.
struct PseudoJudgment {
  bool preferred = false;
  double confidence = 0.0;  // s in [0,1]

  static PseudoJudgment from_raw(bool preferred, double confidence);
};

RewardBreakdown staged_reward(bool parse_ok, const std::optional<ExecutionRecord>& record,
                              const RewardConfig& cfg);

// R_t = 0.5 * (timeout - elapsed) / timeout; requires 0 <= elapsed <= timeout.
double time_reward(double elapsed_seconds, double timeout_seconds);

// preferred -> 3 + 0.5 s, otherwise -0.5 s.
double pseudo_reward(const PseudoJudgment& j);

struct MixedReward {
  double reward = 0.0;
  int lambda = 1;  // 1 = real execution feedback, 0 = pseudo
};

using JudgeFn = std::function<PseudoJudgment()>;

// lambda ~ Bernoulli(1 - p); the judge runs only when lambda = 0.
MixedReward mixed_reward(double real_reward, const JudgeFn& judge, double p, SplitMix64& rng);

// Pairwise comparison against a baseline using the environment's true staged
// totals; the verdict is flipped with probability eta, s maps the absolute
// total gap monotonically into [0, 1) with s(0) = 0 so exact ties exercise
// the flip rule.
PseudoJudgment synthetic_judge(const PlantedEnv& env, const Workflow& candidate,
                               const Workflow& baseline, const Task& task, double eta,
                               double timeout_seconds, SplitMix64& rng);

class JudgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProcessClient;

// Judge behind the same line-delimited JSON protocol as external actors.
// Request: {"task_id", "candidate", "baseline", "context"};
// response: {"judgment": "BETTER"|"NOT_BETTER", "confidence_score": float}.
// The flip rule is applied to the raw verdict. Failures throw JudgeError.
class ExternalJudge {
 public:
  explicit ExternalJudge(std::vector<std::string> command);
  ~ExternalJudge();

  PseudoJudgment judge(const Task& task, const Workflow& candidate, const Workflow& baseline,
                       double budget_seconds);

 private:
  std::unique_ptr<ProcessClient> client_;
};

}  // namespace dynflow
