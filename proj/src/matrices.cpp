#include "dynflow/matrices.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dynflow {

namespace {

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

void write_matrix_csv(const std::string& path, const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& col_labels, const Eigen::MatrixXd& m,
                      const std::string& corner) {
  if (static_cast<Eigen::Index>(row_labels.size()) != m.rows() ||
      static_cast<Eigen::Index>(col_labels.size()) != m.cols()) {
    throw std::invalid_argument("matrix label dimensions do not match values");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write matrix csv: " + path);
  out << csv_quote(corner);
  for (const auto& c : col_labels) out << ',' << csv_quote(c);
  out << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out << csv_quote(row_labels[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << format_number(m(r, c));
    out << '\n';
  }
}

LabeledMatrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open matrix csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty matrix csv: " + path);
  auto header = split_csv_line(line);
  if (header.size() < 2) throw std::runtime_error("matrix csv header needs at least one column");

  LabeledMatrix lm;
  lm.col_labels.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("matrix csv row has " + std::to_string(fields.size()) +
                               " fields, expected " + std::to_string(header.size()));
    }
    lm.row_labels.push_back(fields[0]);
    std::vector<double> row;
    row.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) row.push_back(std::stod(fields[i]));
    rows.push_back(std::move(row));
  }
  lm.values.resize(static_cast<Eigen::Index>(rows.size()),
                   static_cast<Eigen::Index>(lm.col_labels.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      lm.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return lm;
}

OutcomeMatrix outcome_matrix_from_csv(const std::string& path) {
  auto lm = read_matrix_csv(path);
  for (Eigen::Index r = 0; r < lm.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < lm.values.cols(); ++c) {
      double v = lm.values(r, c);
      if (v != 0.0 && v != 1.0) {
        throw std::runtime_error("outcome matrix entries must be 0/1 in " + path);
      }
    }
  }
  return OutcomeMatrix{std::move(lm.row_labels), std::move(lm.col_labels), std::move(lm.values)};
}

RuntimeMatrix runtime_matrix_from_csv(const std::string& path) {
  auto lm = read_matrix_csv(path);
  if ((lm.values.array() <= 0.0).any()) {
    throw std::runtime_error("runtime matrix entries must be strictly positive in " + path);
  }
  return RuntimeMatrix{std::move(lm.row_labels), std::move(lm.col_labels), std::move(lm.values)};
}

}  // namespace dynflow
