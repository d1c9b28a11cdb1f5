#include <doctest.h>

#include <cmath>
#include <set>

#include "dynflow/analysis.hpp"
#include "dynflow/rng.hpp"
#include "dynflow/synth_env.hpp"

using namespace dynflow;

namespace {

Eigen::VectorXd row(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

OutcomeMatrix make_y(std::initializer_list<std::initializer_list<double>> rows) {
  OutcomeMatrix y;
  y.bits.resize(static_cast<Eigen::Index>(rows.size()),
                static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& rr : rows) {
    Eigen::Index c = 0;
    for (double v : rr) y.bits(r, c++) = v;
    y.workflows.push_back("w" + std::to_string(r));
    ++r;
  }
  for (Eigen::Index c = 0; c < y.bits.cols(); ++c) y.tasks.push_back("q" + std::to_string(c));
  return y;
}

RuntimeMatrix make_t(const OutcomeMatrix& shape,
                     std::initializer_list<std::initializer_list<double>> rows) {
  RuntimeMatrix t;
  t.workflows = shape.workflows;
  t.tasks = shape.tasks;
  t.values.resizeLike(shape.bits);
  Eigen::Index r = 0;
  for (const auto& rr : rows) {
    Eigen::Index c = 0;
    for (double v : rr) t.values(r, c++) = v;
    ++r;
  }
  return t;
}

// The Appendix B.4 table: Q = {a, b} uniform, A1 = {a}, A2 = {b}, A3 = {a, b}.
OutcomeMatrix b4_table() { return make_y({{1, 0}, {0, 1}, {1, 1}}); }

}  // namespace

TEST_CASE("d_sample: mismatch rates") {
  CHECK(d_sample(row({1, 1, 0}), row({1, 1, 0})) == 0.0);
  CHECK(d_sample(row({1, 0}), row({0, 1})) == 1.0);  // the B.4 pair
  CHECK(d_sample(row({1, 1, 0, 0}), row({1, 0, 1, 0})) == 0.5);
  CHECK_THROWS(d_sample(row({1}), row({1, 0})));
}

TEST_CASE("d_efficiency: normalized runtime differences") {
  CHECK(d_efficiency(row({2, 3}), row({2, 3})) == 0.0);
  CHECK(d_efficiency(row({1, 1, 1}), row({3, 3, 3})) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d_efficiency(row({1, 2}), row({3, 2})) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS(d_efficiency(row({0, 1}), row({1, 1})));
}

TEST_CASE("d_sample satisfies the triangle inequality on random bit rows") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng.uniform_index(30));
    Eigen::VectorXd a(n), b(n), c(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      a(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
      b(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
      c(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    CHECK(d_sample(a, c) <= d_sample(a, b) + d_sample(b, c) + 1e-12);
  }
}

TEST_CASE("distance_matrix combines the two metrics and matches recomputation") {
  SUBCASE("single workflow: zero matrix") {
    auto y = make_y({{1, 0, 1}});
    auto t = make_t(y, {{1, 2, 3}});
    auto dm = distance_matrix(y, t);
    CHECK(dm.d.rows() == 1);
    CHECK(dm.d(0, 0) == 0.0);
  }

  SUBCASE("averaging rule") {
    auto y = make_y({{1, 0}, {0, 1}});             // d_sample = 1
    auto t = make_t(y, {{1, 1}, {3, 3}});          // d_efficiency = 0.5
    auto dm = distance_matrix(y, t);
    CHECK(dm.d(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(dm.d(1, 0) == dm.d(0, 1));
  }

  SUBCASE("random 4x6 environment equals entrywise recomputation") {
    SplitMix64 rng(8);
    OutcomeMatrix y;
    RuntimeMatrix t;
    y.bits.resize(4, 6);
    t.values.resize(4, 6);
    for (int i = 0; i < 4; ++i) {
      y.workflows.push_back("w" + std::to_string(i));
      for (int j = 0; j < 6; ++j) {
        y.bits(i, j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
        t.values(i, j) = 0.5 + 10.0 * rng.next_unit01();
      }
    }
    for (int j = 0; j < 6; ++j) y.tasks.push_back("q" + std::to_string(j));
    t.workflows = y.workflows;
    t.tasks = y.tasks;

    auto dm = distance_matrix(y, t);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        double ds = d_sample(y.bits.row(i).transpose(), y.bits.row(j).transpose());
        double de = d_efficiency(t.values.row(i).transpose(), t.values.row(j).transpose());
        if (i == j) {
          CHECK(dm.d(i, j) == 0.0);
        } else {
          CHECK(dm.d(i, j) == doctest::Approx(0.5 * (ds + de)).epsilon(1e-12));
          CHECK(dm.d(i, j) >= 0.0);
          CHECK(dm.d(i, j) <= 1.0);
        }
      }
    }
  }
}

TEST_CASE("gap_report reproduces the counterexample table") {
  GapReport g = gap_report(b4_table());
  CHECK(g.ex_static == 1.0);
  CHECK(g.ex_dynamic == 1.0);
  CHECK(g.delta == 0.0);
  CHECK(g.coverage);
  CHECK(g.i_star == 2);  // the covering workflow
  // pairwise disagreement without gap
  CHECK(d_sample(b4_table().bits.row(0).transpose(), b4_table().bits.row(1).transpose()) == 1.0);
  // lower bound for j = 0 with i* = 2: (0.5 - 1 + 0.5) / 2 = 0
  CHECK(g.lower_bounds(0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gap_report on the complementary pair without the coverer") {
  auto y = make_y({{1, 0}, {0, 1}});
  GapReport g = gap_report(y);
  CHECK(g.ex_static == 0.5);
  CHECK(g.ex_dynamic == 1.0);
  CHECK(g.delta == 0.5);
  CHECK(!g.coverage);
}

TEST_CASE("single workflow always has zero gap") {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    OutcomeMatrix y;
    y.workflows = {"w0"};
    const int q = 1 + static_cast<int>(rng.uniform_index(20));
    y.bits.resize(1, q);
    for (int j = 0; j < q; ++j) {
      y.bits(0, j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
      y.tasks.push_back("q" + std::to_string(j));
    }
    GapReport g = gap_report(y);
    CHECK(g.delta == 0.0);
    CHECK(g.coverage);
  }
}

TEST_CASE("gap two-path equality: reductions vs set union") {
  SplitMix64 rng(1234);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_index(6));
    const int q = 1 + static_cast<int>(rng.uniform_index(30));
    OutcomeMatrix y;
    y.bits.resize(k, q);
    for (int i = 0; i < k; ++i) {
      y.workflows.push_back("w" + std::to_string(i));
      for (int j = 0; j < q; ++j) y.bits(i, j) = rng.bernoulli(0.4) ? 1.0 : 0.0;
    }
    for (int j = 0; j < q; ++j) y.tasks.push_back("q" + std::to_string(j));
    GapReport g = gap_report(y);

    std::set<int> uni;
    int best = 0;
    for (int i = 0; i < k; ++i) {
      int count = 0;
      for (int j = 0; j < q; ++j) {
        if (y.bits(i, j) > 0.5) {
          uni.insert(j);
          ++count;
        }
      }
      best = std::max(best, count);
    }
    double delta_sets =
        (static_cast<double>(uni.size()) - best) / static_cast<double>(q);
    CHECK(std::fabs(g.delta - delta_sets) <= 1e-12);
  }
}

TEST_CASE("non-uniform weights are honored") {
  auto y = make_y({{1, 0}, {0, 1}});
  Eigen::VectorXd w(2);
  w << 0.9, 0.1;
  GapReport g = gap_report(y, w);
  CHECK(g.ex_static == doctest::Approx(0.9));
  CHECK(g.ex_dynamic == doctest::Approx(1.0));
  CHECK(g.delta == doctest::Approx(0.1));

  Eigen::VectorXd bad(2);
  bad << 0.9, 0.2;
  CHECK_THROWS((void)gap_report(y, bad));
}

TEST_CASE("efficiency_report buckets and deltas") {
  SUBCASE("equal runtimes give zero delta everywhere") {
    auto y = make_y({{1, 1, 0}, {1, 0, 1}});
    auto t = make_t(y, {{4, 4, 4}, {4, 4, 4}});
    auto rep = efficiency_report(y, t);
    for (const auto& b : rep.buckets) CHECK(b.delta_eff == 0.0);
  }

  SUBCASE("hand-built bucket: t_max 10, t_min 3 -> 0.7") {
    auto y = make_y({{1}, {1}});
    auto t = make_t(y, {{10}, {3}});
    auto rep = efficiency_report(y, t);
    REQUIRE(rep.buckets.size() == 1);
    CHECK(rep.buckets[0].n == 2);
    CHECK(rep.buckets[0].count == 1);
    CHECK(rep.buckets[0].delta_eff == doctest::Approx(0.7).epsilon(1e-12));
  }

  SUBCASE("random environment equals per-query brute force and partitions solvable queries") {
    auto env = plant_env(21, 8, 60, 1.0);
    auto [y, t] = env.materialize();
    auto rep = efficiency_report(y, t);

    std::map<int, std::vector<std::pair<double, double>>> oracle;  // n -> (tmax, tmin)
    int solvable = 0;
    for (Eigen::Index q = 0; q < y.q(); ++q) {
      int n = 0;
      double tmax = -1, tmin = -1;
      for (Eigen::Index i = 0; i < y.k(); ++i) {
        if (y.bits(i, q) < 0.5) continue;
        ++n;
        double v = t.values(i, q);
        if (tmax < 0 || v > tmax) tmax = v;
        if (tmin < 0 || v < tmin) tmin = v;
      }
      if (n > 0) {
        oracle[n].emplace_back(tmax, tmin);
        ++solvable;
      }
    }
    REQUIRE(rep.buckets.size() == oracle.size());
    std::int64_t count_sum = 0;
    for (const auto& b : rep.buckets) {
      REQUIRE(oracle.count(b.n) == 1);
      const auto& cells = oracle[b.n];
      CHECK(b.count == static_cast<std::int64_t>(cells.size()));
      double sum_max = 0, sum_min = 0;
      for (auto [mx, mn] : cells) {
        sum_max += mx;
        sum_min += mn;
      }
      CHECK(b.t_bar_max == doctest::Approx(sum_max / cells.size()).epsilon(1e-12));
      CHECK(b.t_bar_min == doctest::Approx(sum_min / cells.size()).epsilon(1e-12));
      CHECK(b.delta_eff ==
            doctest::Approx((b.t_bar_max - b.t_bar_min) / b.t_bar_max).epsilon(1e-12));
      CHECK(b.delta_eff >= 0.0);
      CHECK(b.delta_eff < 1.0);
      count_sum += b.count;
    }
    CHECK(count_sum == solvable);
  }
}

TEST_CASE("pareto points dominate statics at the oracle") {
  SUBCASE("oracle accuracy bounds every workflow accuracy") {
    auto env = plant_env(33, 10, 80, 1.0);
    auto [y, t] = env.materialize();
    auto pts = pareto_points(y, t);
    REQUIRE(pts.back().is_oracle);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      CHECK(pts.back().accuracy >= pts[i].accuracy - 1e-12);
    }
  }

  SUBCASE("single workflow: oracle shares accuracy, no slower") {
    auto y = make_y({{1, 0, 1, 1}});
    auto t = make_t(y, {{2, 9, 4, 6}});
    auto pts = pareto_points(y, t);
    REQUIRE(pts.size() == 2);
    CHECK(pts[1].accuracy == doctest::Approx(pts[0].accuracy));
    CHECK(pts[1].mean_seconds <= pts[0].mean_seconds + 1e-12);
  }
}
