#include "dynflow/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace dynflow {

namespace {

void check_dims(const OutcomeMatrix& y, const RuntimeMatrix& t) {
  if (y.bits.rows() != t.values.rows() || y.bits.cols() != t.values.cols()) {
    throw std::invalid_argument("outcome and runtime matrices have mismatched dimensions");
  }
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

Eigen::VectorXd uniform_weights(Eigen::Index q) {
  return Eigen::VectorXd::Constant(q, 1.0 / static_cast<double>(q));
}

void check_weights(const Eigen::VectorXd& weights, Eigen::Index q) {
  if (weights.size() != q) throw std::invalid_argument("weight vector length mismatch");
  if ((weights.array() < 0.0).any()) throw std::invalid_argument("weights must be nonnegative");
  if (std::fabs(weights.sum() - 1.0) > 1e-9) throw std::invalid_argument("weights must sum to 1");
}

double d_sample(const Eigen::VectorXd& yi, const Eigen::VectorXd& yj,
                const Eigen::VectorXd& weights) {
  if (yi.size() != yj.size()) throw std::invalid_argument("d_sample rows differ in length");
  check_weights(weights, yi.size());
  return ((yi - yj).array().abs() * weights.array()).sum();
}

double d_sample(const Eigen::VectorXd& yi, const Eigen::VectorXd& yj) {
  return d_sample(yi, yj, uniform_weights(yi.size()));
}

double d_efficiency(const Eigen::VectorXd& ti, const Eigen::VectorXd& tj,
                    const Eigen::VectorXd& weights) {
  if (ti.size() != tj.size()) throw std::invalid_argument("d_efficiency rows differ in length");
  if ((ti.array() <= 0.0).any() || (tj.array() <= 0.0).any()) {
    throw std::invalid_argument("runtimes must be strictly positive");
  }
  check_weights(weights, ti.size());
  return (((ti - tj).array().abs() / (ti + tj).array()) * weights.array()).sum();
}

double d_efficiency(const Eigen::VectorXd& ti, const Eigen::VectorXd& tj) {
  return d_efficiency(ti, tj, uniform_weights(ti.size()));
}

DistanceMatrix distance_matrix(const OutcomeMatrix& y, const RuntimeMatrix& t,
                               const std::optional<Eigen::VectorXd>& weights) {
  check_dims(y, t);
  const Eigen::Index k = y.k();
  Eigen::VectorXd w = weights ? *weights : uniform_weights(y.q());
  check_weights(w, y.q());

  DistanceMatrix dm;
  dm.labels = y.workflows;
  dm.d_sample = Eigen::MatrixXd::Zero(k, k);
  dm.d_efficiency = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      double ds = d_sample(y.bits.row(i).transpose(), y.bits.row(j).transpose(), w);
      double de = d_efficiency(t.values.row(i).transpose(), t.values.row(j).transpose(), w);
      dm.d_sample(i, j) = dm.d_sample(j, i) = ds;
      dm.d_efficiency(i, j) = dm.d_efficiency(j, i) = de;
    }
  }
  dm.d = 0.5 * (dm.d_sample + dm.d_efficiency);
  return dm;
}

GapReport gap_report(const OutcomeMatrix& y, const std::optional<Eigen::VectorXd>& weights) {
  if (y.k() < 1) throw std::invalid_argument("gap_report needs at least one workflow row");
  Eigen::VectorXd w = weights ? *weights : uniform_weights(y.q());
  check_weights(w, y.q());

  GapReport r;
  r.workflows = y.workflows;

  // Fixed left-to-right accumulation per row so equal-count rows sum to
  // bit-identical values.
  r.p.resize(y.k());
  for (Eigen::Index i = 0; i < y.k(); ++i) {
    double acc = 0.0;
    for (Eigen::Index q = 0; q < y.q(); ++q) acc += y.bits(i, q) > 0.5 ? w(q) : 0.0;
    r.p(i) = acc;
  }
  r.ex_static = r.p.maxCoeff();

  Eigen::VectorXd col_max = y.bits.colwise().maxCoeff().transpose();
  auto covers_union = [&](Eigen::Index i) {
    for (Eigen::Index q = 0; q < y.q(); ++q) {
      if (w(q) > 0.0 && col_max(q) > 0.5 && y.bits(i, q) < 0.5) return false;
    }
    return true;
  };

  // i*: first argmax; among fp-tied maxima prefer a row covering the union,
  // which keeps delta = 0 <=> coverage exact.
  r.i_star = -1;
  Eigen::Index first_max = -1;
  for (Eigen::Index i = 0; i < y.k(); ++i) {
    if (r.p(i) != r.ex_static) continue;
    if (first_max < 0) first_max = i;
    if (covers_union(i)) {
      r.i_star = i;
      break;
    }
  }
  if (r.i_star < 0) r.i_star = first_max;

  // Every delta term is exactly 0 or w(q), so delta >= 0 holds exactly and
  // delta = 0 iff i* covers the positive-weight union.
  double delta = 0.0;
  for (Eigen::Index q = 0; q < y.q(); ++q) {
    if (col_max(q) > 0.5 && y.bits(r.i_star, q) < 0.5) delta += w(q);
  }
  r.delta = delta;
  r.ex_dynamic = r.ex_static + delta;

  r.lower_bounds.resize(y.k());
  for (Eigen::Index j = 0; j < y.k(); ++j) {
    double dij = d_sample(y.bits.row(r.i_star).transpose(), y.bits.row(j).transpose(), w);
    r.lower_bounds(j) = 0.5 * (r.p(j) - r.p(r.i_star) + dij);
  }

  r.coverage = false;
  for (Eigen::Index i = 0; i < y.k() && !r.coverage; ++i) r.coverage = covers_union(i);
  return r;
}

EfficiencyReport efficiency_report(const OutcomeMatrix& y, const RuntimeMatrix& t) {
  check_dims(y, t);
  struct Acc {
    std::int64_t count = 0;
    double sum_max = 0.0;
    double sum_min = 0.0;
  };
  std::map<int, Acc> acc;
  for (Eigen::Index q = 0; q < y.q(); ++q) {
    int n = 0;
    double tmax = 0.0, tmin = 0.0;
    for (Eigen::Index i = 0; i < y.k(); ++i) {
      if (y.bits(i, q) < 0.5) continue;
      double ti = t.values(i, q);
      if (n == 0) {
        tmax = tmin = ti;
      } else {
        tmax = std::max(tmax, ti);
        tmin = std::min(tmin, ti);
      }
      ++n;
    }
    if (n == 0) continue;  // unsolvable queries form no bucket
    auto& a = acc[n];
    a.count += 1;
    a.sum_max += tmax;
    a.sum_min += tmin;
  }
  EfficiencyReport r;
  for (const auto& [n, a] : acc) {
    EfficiencyBucket b;
    b.n = n;
    b.count = a.count;
    b.t_bar_max = a.sum_max / static_cast<double>(a.count);
    b.t_bar_min = a.sum_min / static_cast<double>(a.count);
    b.delta_eff = (b.t_bar_max - b.t_bar_min) / b.t_bar_max;
    r.buckets.push_back(b);
  }
  return r;
}

std::vector<ParetoPoint> pareto_points(const OutcomeMatrix& y, const RuntimeMatrix& t) {
  check_dims(y, t);
  std::vector<ParetoPoint> pts;
  Eigen::VectorXd w = uniform_weights(y.q());
  Eigen::VectorXd p = y.bits * w;
  for (Eigen::Index i = 0; i < y.k(); ++i) {
    pts.push_back({y.workflows[static_cast<std::size_t>(i)], p(i), t.values.row(i).mean(), false});
  }
  // Oracle: per solvable query charge only the fastest correct workflow.
  double solvable = 0.0, oracle_time_sum = 0.0, union_mass = 0.0;
  for (Eigen::Index q = 0; q < y.q(); ++q) {
    double best = -1.0;
    for (Eigen::Index i = 0; i < y.k(); ++i) {
      if (y.bits(i, q) > 0.5 && (best < 0.0 || t.values(i, q) < best)) best = t.values(i, q);
    }
    if (best >= 0.0) {
      solvable += 1.0;
      oracle_time_sum += best;
      union_mass += w(q);
    }
  }
  ParetoPoint oracle;
  oracle.label = "oracle";
  oracle.accuracy = union_mass;
  oracle.mean_seconds = solvable > 0.0 ? oracle_time_sum / solvable : 0.0;
  oracle.is_oracle = true;
  pts.push_back(oracle);
  return pts;
}

nlohmann::json gap_report_to_json(const GapReport& r) {
  nlohmann::json j;
  j["workflows"] = r.workflows;
  j["p"] = std::vector<double>(r.p.data(), r.p.data() + r.p.size());
  j["ex_static"] = r.ex_static;
  j["ex_dynamic"] = r.ex_dynamic;
  j["delta"] = r.delta;
  j["i_star"] = r.i_star;
  j["lower_bounds"] =
      std::vector<double>(r.lower_bounds.data(), r.lower_bounds.data() + r.lower_bounds.size());
  j["coverage"] = r.coverage;
  return j;
}

void write_gap_report(const GapReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write gap report: " + path);
  out << gap_report_to_json(r).dump(2) << "\n";
}

void write_distance_matrix_csv(const DistanceMatrix& dm, const std::string& path) {
  write_matrix_csv(path, dm.labels, dm.labels, dm.d, "label");
}

void write_efficiency_report_csv(const EfficiencyReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write efficiency report: " + path);
  out << "N,count,t_max,t_min,delta_eff\n";
  for (const auto& b : r.buckets) {
    out << b.n << ',' << b.count << ',' << format_number(b.t_bar_max) << ','
        << format_number(b.t_bar_min) << ',' << format_number(b.delta_eff) << '\n';
  }
}

void write_pareto_csv(const std::vector<ParetoPoint>& pts, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write pareto csv: " + path);
  out << "label,accuracy,mean_seconds,is_oracle\n";
  for (const auto& p : pts) {
    std::string label = p.label;
    bool quote = label.find_first_of(",\"\n") != std::string::npos;
    if (quote) {
      std::string q = "\"";
      for (char c : label) {
        if (c == '"') q += "\"\"";
        else q.push_back(c);
      }
      q.push_back('"');
      label = q;
    }
    out << label << ',' << format_number(p.accuracy) << ',' << format_number(p.mean_seconds)
        << ',' << (p.is_oracle ? 1 : 0) << '\n';
  }
}

}  // namespace dynflow
