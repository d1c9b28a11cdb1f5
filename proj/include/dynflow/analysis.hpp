#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "dynflow/matrices.hpp"

namespace dynflow {

// Pairwise workflow distances: d = (d_sample + d_efficiency) / 2.
// Symmetric, zero diagonal, entries in [0, 1].
struct DistanceMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd d_sample;
  Eigen::MatrixXd d_efficiency;
  Eigen::MatrixXd d;
};

// Static-vs-dynamic gap: p_i per workflow, EX_static = max_i p_i,
// EX_dynamic = weighted measure of the success-region union, delta = gap.
struct GapReport {
  std::vector<std::string> workflows;
  Eigen::VectorXd p;
  double ex_static = 0.0;
  double ex_dynamic = 0.0;
  double delta = 0.0;
  Eigen::Index i_star = 0;            // first argmax of p
  Eigen::VectorXd lower_bounds;       // (p_j - p_i* + D_i*j) / 2 per j
  bool coverage = false;              // exists i with A_i covering the union
};

struct EfficiencyBucket {
  int n = 0;            // number of workflows solving the query
  std::int64_t count = 0;
  double t_bar_max = 0.0;
  double t_bar_min = 0.0;
  double delta_eff = 0.0;  // (t_bar_max - t_bar_min) / t_bar_max
};

struct EfficiencyReport {
  std::vector<EfficiencyBucket> buckets;  // N ascending, only nonempty buckets
};

struct ParetoPoint {
  std::string label;
  double accuracy = 0.0;
  double mean_seconds = 0.0;
  bool is_oracle = false;
};

// Uniform weights when none are given; otherwise weights must be nonnegative
// and sum to 1 (within 1e-9).
Eigen::VectorXd uniform_weights(Eigen::Index q);
void check_weights(const Eigen::VectorXd& weights, Eigen::Index q);

// Weighted mismatch rate Pr(Y_i != Y_j) of two bit rows.
double d_sample(const Eigen::VectorXd& yi, const Eigen::VectorXd& yj,
                const Eigen::VectorXd& weights);
double d_sample(const Eigen::VectorXd& yi, const Eigen::VectorXd& yj);

// Weighted mean of |t_i - t_j| / (t_i + t_j); runtimes must be positive.
double d_efficiency(const Eigen::VectorXd& ti, const Eigen::VectorXd& tj,
                    const Eigen::VectorXd& weights);
double d_efficiency(const Eigen::VectorXd& ti, const Eigen::VectorXd& tj);

DistanceMatrix distance_matrix(const OutcomeMatrix& y, const RuntimeMatrix& t,
                               const std::optional<Eigen::VectorXd>& weights = {});

GapReport gap_report(const OutcomeMatrix& y, const std::optional<Eigen::VectorXd>& weights = {});

EfficiencyReport efficiency_report(const OutcomeMatrix& y, const RuntimeMatrix& t);

// Per-workflow (accuracy, mean runtime over all queries) plus the oracle
// point: accuracy = EX_dynamic, time = mean over solvable queries of the
// fastest correct workflow's runtime.
std::vector<ParetoPoint> pareto_points(const OutcomeMatrix& y, const RuntimeMatrix& t);

nlohmann::json gap_report_to_json(const GapReport& r);
void write_gap_report(const GapReport& r, const std::string& path);
void write_distance_matrix_csv(const DistanceMatrix& dm, const std::string& path);
void write_efficiency_report_csv(const EfficiencyReport& r, const std::string& path);
void write_pareto_csv(const std::vector<ParetoPoint>& pts, const std::string& path);

}  // namespace dynflow
