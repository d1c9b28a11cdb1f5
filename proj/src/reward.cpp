#include "dynflow/reward.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dynflow/actor_process.hpp"

namespace dynflow {

PseudoJudgment PseudoJudgment::from_raw(bool preferred, double confidence) {
  if (confidence < 0.0 || confidence > 1.0) {
    throw std::invalid_argument("judge confidence must lie in [0,1]");
  }
  if (!preferred && confidence < 0.3) preferred = true;  // low-confidence default
  return PseudoJudgment{preferred, confidence};
}

RewardBreakdown staged_reward(bool parse_ok, const std::optional<ExecutionRecord>& record,
                              const RewardConfig& cfg) {
  if (parse_ok != record.has_value()) {
    throw std::invalid_argument("staged_reward: record must be present exactly when parse_ok");
  }
  RewardBreakdown b;
  if (!parse_ok) {
    b.format = -0.5;
    b.total = b.format;
    return b;
  }
  b.format = 0.5;
  if (record->stage == ExecutionStage::FormatInvalid) {
    throw std::invalid_argument("staged_reward: parse_ok record cannot be format_invalid");
  }
  if (record->stage == ExecutionStage::Timeout) {
    b.timeout_pen = -0.5;
    b.total = b.format + *b.timeout_pen;
    return b;
  }
  b.timeout_pen = 0.0;
  if (record->stage == ExecutionStage::ExecutionFailed) {
    b.execution = -1.0;
    b.total = b.format + *b.timeout_pen + *b.execution;
    return b;
  }
  b.execution = 1.0;
  if (record->stage == ExecutionStage::ResultIncorrect) {
    b.result = -1.5;
    b.total = b.format + *b.timeout_pen + *b.execution + *b.result;
    return b;
  }
  b.result = 1.5;
  b.time = time_reward(std::min(record->elapsed_seconds, cfg.timeout_seconds), cfg.timeout_seconds);
  b.total = b.format + *b.timeout_pen + *b.execution + *b.result + *b.time;
  return b;
}

double time_reward(double elapsed_seconds, double timeout_seconds) {
  if (timeout_seconds <= 0.0) throw std::invalid_argument("timeout must be positive");
  if (elapsed_seconds < 0.0 || elapsed_seconds > timeout_seconds) {
    throw std::invalid_argument("elapsed must lie in [0, timeout]");
  }
  double r = 0.5 * (timeout_seconds - elapsed_seconds) / timeout_seconds;
  return std::clamp(r, 0.0, 0.5);
}

double pseudo_reward(const PseudoJudgment& j) {
  return j.preferred ? 3.0 + 0.5 * j.confidence : -0.5 * j.confidence;
}

MixedReward mixed_reward(double real_reward, const JudgeFn& judge, double p, SplitMix64& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("pseudo probability must lie in [0,1)");
  if (p > 0.0 && rng.bernoulli(p)) {
    return MixedReward{pseudo_reward(judge()), 0};
  }
  return MixedReward{real_reward, 1};
}

PseudoJudgment synthetic_judge(const PlantedEnv& env, const Workflow& candidate,
                               const Workflow& baseline, const Task& task, double eta,
                               double timeout_seconds, SplitMix64& rng) {
  double cand = env.staged_total(candidate, task, timeout_seconds);
  double base = env.staged_total(baseline, task, timeout_seconds);
  bool preferred = cand > base;
  if (eta > 0.0 && rng.bernoulli(eta)) preferred = !preferred;
  double gap = std::fabs(cand - base);
  double s = 2.0 / (1.0 + std::exp(-gap)) - 1.0;  // monotone, s(0) = 0
  return PseudoJudgment::from_raw(preferred, s);
}

ExternalJudge::ExternalJudge(std::vector<std::string> command)
    : client_(std::make_unique<ProcessClient>(std::move(command))) {}

ExternalJudge::~ExternalJudge() = default;

PseudoJudgment ExternalJudge::judge(const Task& task, const Workflow& candidate,
                                    const Workflow& baseline, double budget_seconds) {
  nlohmann::json req;
  req["task_id"] = task.task_id;
  req["candidate"] = canonical_string(candidate);
  req["baseline"] = canonical_string(baseline);
  req["context"] = nlohmann::json::object();

  auto resp = client_->request(req, budget_seconds);
  if (const auto* err = std::get_if<std::string>(&resp)) {
    throw JudgeError("judge process failed: " + *err);
  }
  const auto& body = std::get<nlohmann::json>(resp);
  if (!body.contains("judgment") || !body.contains("confidence_score")) {
    throw JudgeError("judge response lacks judgment/confidence_score");
  }
  const std::string verdict = body.at("judgment").get<std::string>();
  if (verdict != "BETTER" && verdict != "NOT_BETTER") {
    throw JudgeError("judge verdict must be BETTER or NOT_BETTER, got " + verdict);
  }
  double s = body.at("confidence_score").get<double>();
  if (s < 0.0 || s > 1.0) throw JudgeError("judge confidence out of [0,1]");
  return PseudoJudgment::from_raw(verdict == "BETTER", s);
}

}  // namespace dynflow
