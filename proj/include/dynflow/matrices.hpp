#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace dynflow {

// K x Q success bits Y_i(q); row i is workflow i's success indicator over
// tasks. Values are 0.0/1.0 so Eigen reductions apply directly.
struct OutcomeMatrix {
  std::vector<std::string> workflows;  // canonical strings, row order
  std::vector<std::string> tasks;      // task ids, column order
  Eigen::MatrixXd bits;

  Eigen::Index k() const { return bits.rows(); }
  Eigen::Index q() const { return bits.cols(); }
};

// Same indexing, strictly positive runtimes t_i(q) in seconds.
struct RuntimeMatrix {
  std::vector<std::string> workflows;
  std::vector<std::string> tasks;
  Eigen::MatrixXd values;
};

// CSV layout: header "workflow,<task ids...>", one row per canonical string.
// Fields containing commas or quotes are double-quoted (canonical strings
// embed commas).
void write_matrix_csv(const std::string& path, const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& col_labels, const Eigen::MatrixXd& m,
                      const std::string& corner = "workflow");

struct LabeledMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Eigen::MatrixXd values;
};

LabeledMatrix read_matrix_csv(const std::string& path);

OutcomeMatrix outcome_matrix_from_csv(const std::string& path);
RuntimeMatrix runtime_matrix_from_csv(const std::string& path);

}  // namespace dynflow
