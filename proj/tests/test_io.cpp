#include <doctest.h>

#include <sys/resource.h>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <vector>

#include "dynflow/io.hpp"
#include "dynflow/matrices.hpp"
#include "dynflow/rng.hpp"

using namespace dynflow;

namespace {

LogRecord sample_record(int i) {
  LogRecord rec;
  rec.timestamp = 0.0;
  rec.task_id = "q" + std::to_string(i);
  rec.workflow = "D|parser1,generator1";
  rec.mask_bits = "1110111";
  rec.stage = ExecutionStage::ResultCorrect;
  rec.elapsed_seconds = 12.25;
  rec.reward.format = 0.5;
  rec.reward.timeout_pen = 0.0;
  rec.reward.execution = 1.0;
  rec.reward.result = 1.5;
  rec.reward.time = 0.45;
  rec.reward.total = 3.45;
  rec.total = 3.45;
  rec.lambda = 1;
  return rec;
}

long max_rss_kb() {
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return usage.ru_maxrss;
}

}  // namespace

TEST_CASE("log records round-trip through JSONL") {
  const std::string path = "/tmp/dynflow_test_log.jsonl";
  {
    LogWriter writer(path);
    writer.write(sample_record(1));
  }
  LogReader reader(path);
  auto rec = reader.next();
  REQUIRE(rec.has_value());
  CHECK(rec->task_id == "q1");
  CHECK(rec->workflow == "D|parser1,generator1");
  CHECK(rec->stage == ExecutionStage::ResultCorrect);
  CHECK(rec->reward.time == 0.45);
  CHECK(rec->total == 3.45);
  CHECK(!reader.next().has_value());
}

TEST_CASE("a corrupt line is named in strict mode and skipped in lenient mode") {
  const std::string path = "/tmp/dynflow_test_corrupt.jsonl";
  {
    LogWriter writer(path);
    for (int i = 0; i < 50; ++i) writer.write(sample_record(i));
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "{broken json\n";
  }
  {
    LogWriter writer(path, /*append=*/true);
    for (int i = 50; i < 99; ++i) writer.write(sample_record(i));  // 99 good lines + 1 corrupt
  }

  SUBCASE("strict") {
    LogReader reader(path);
    int count = 0;
    try {
      while (reader.next()) ++count;
      FAIL("expected LogParseError");
    } catch (const LogParseError& e) {
      CHECK(e.line_number() == 51);
      CHECK(count == 50);
    }
  }

  SUBCASE("lenient") {
    LogReader reader(path, /*lenient=*/true);
    int count = 0;
    while (reader.next()) ++count;
    CHECK(count == 99);
    CHECK(reader.skipped() == 1);
  }
}

TEST_CASE("blank lines are skipped, unknown schema versions rejected") {
  const std::string path = "/tmp/dynflow_test_versions.jsonl";
  {
    std::ofstream out(path);
    out << "\n   \n";
    out << sample_record(0).to_json().dump() << "\n";
    auto bad = sample_record(1).to_json();
    bad["schema_version"] = 99;
    out << bad.dump() << "\n";
  }
  LogReader strict(path);
  CHECK(strict.next().has_value());
  CHECK_THROWS_AS((void)strict.next(), LogParseError);

  LogReader lenient(path, true);
  CHECK(lenient.next().has_value());
  CHECK_THROWS_AS((void)lenient.next(), LogParseError);  // version mismatch stays fatal
}

TEST_CASE("streaming a 100k-record log stays within a flat memory ceiling") {
  const std::string path = "/tmp/dynflow_test_large.jsonl";
  {
    LogWriter writer(path);
    for (int i = 0; i < 100000; ++i) writer.write(sample_record(i));
  }
  long before = max_rss_kb();
  LogReader reader(path);
  std::size_t count = 0;
  double checksum = 0;
  while (auto rec = reader.next()) {
    ++count;
    checksum += rec->elapsed_seconds;
  }
  long after = max_rss_kb();
  CHECK(count == 100000);
  CHECK(checksum > 0);
  // the file is ~20 MB; a streaming reader should not pull it into memory
  CHECK(after - before < 8 * 1024);
  std::remove(path.c_str());
}

TEST_CASE("log-to-matrix ingestion keeps the latest record per cell") {
  const std::string path = "/tmp/dynflow_test_ingest.jsonl";
  {
    LogWriter writer(path);
    for (const char* wf : {"0|g1", "A|g1,o1"}) {
      for (const char* task : {"qa", "qb"}) {
        LogRecord rec = sample_record(0);
        rec.workflow = wf;
        rec.task_id = task;
        rec.stage = ExecutionStage::ResultIncorrect;
        rec.elapsed_seconds = 5.0;
        writer.write(rec);
      }
    }
    // retry overwrites one cell with a success
    LogRecord retry = sample_record(0);
    retry.workflow = "0|g1";
    retry.task_id = "qa";
    retry.stage = ExecutionStage::ResultCorrect;
    retry.elapsed_seconds = 2.0;
    writer.write(retry);
  }
  auto [y, t] = matrices_from_logs(path, false);
  REQUIRE(y.workflows == std::vector<std::string>{"0|g1", "A|g1,o1"});
  REQUIRE(y.tasks == std::vector<std::string>{"qa", "qb"});
  CHECK(y.bits(0, 0) == 1.0);
  CHECK(y.bits(0, 1) == 0.0);
  CHECK(t.values(0, 0) == 2.0);
  CHECK(t.values(0, 1) == 5.0);

  // incomplete coverage is an error
  {
    LogWriter writer(path, true);
    LogRecord extra = sample_record(0);
    extra.workflow = "B|g1,g1,g1,s1";
    extra.task_id = "qa";  // no qb record for this workflow
    writer.write(extra);
  }
  CHECK_THROWS((void)matrices_from_logs(path, false));
}

TEST_CASE("matrix CSVs quote canonical strings and round-trip exactly") {
  const std::string path = "/tmp/dynflow_test_matrix.csv";
  std::vector<std::string> rows{"0|g1", "B|g1,g2,g3,s1"};
  std::vector<std::string> cols{"qa", "qb", "qc"};
  Eigen::MatrixXd m(2, 3);
  m << 1, 0, 1, 0.125, 2.5, 3.0625;
  write_matrix_csv(path, rows, cols, m);

  auto lm = read_matrix_csv(path);
  CHECK(lm.row_labels == rows);
  CHECK(lm.col_labels == cols);
  CHECK((lm.values.array() == m.array()).all());
}

TEST_CASE("parallel_for covers every index exactly once at any worker cap") {
  for (int workers : {1, 3, 8}) {
    std::vector<std::atomic<int>> hits(257);
    for (auto& h : hits) h = 0;
    parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h == 1);
  }
}

TEST_CASE("worker cap env default") {
  CHECK(default_worker_cap(3) >= 1);
}
