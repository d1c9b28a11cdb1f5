#include "dynflow/exec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "dynflow/rng.hpp"

namespace dynflow {

namespace {

constexpr std::array<std::string_view, 5> kStageNames = {
    "format_invalid", "timeout", "execution_failed", "result_incorrect", "result_correct"};

constexpr double kNumericTolerance = 1e-6;

std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool is_numeric(const Value& v) {
  return std::holds_alternative<std::int64_t>(v) || std::holds_alternative<double>(v);
}

double as_double(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  return std::get<double>(v);
}

// null < numeric < text
int type_class(const Value& v) {
  if (std::holds_alternative<std::monostate>(v)) return 0;
  if (is_numeric(v)) return 1;
  return 2;
}

Value normalized(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return Value{trimmed(*s)};
  return v;
}

std::vector<std::vector<Value>> normalized_sorted_rows(const ResultSet& rs) {
  std::vector<std::vector<Value>> rows;
  rows.reserve(rs.rows.size());
  for (const auto& r : rs.rows) {
    std::vector<Value> row;
    row.reserve(r.size());
    for (const auto& v : r) row.push_back(normalized(v));
    rows.push_back(std::move(row));
  }
  auto cell_less = [](const Value& a, const Value& b) {
    int ca = type_class(a), cb = type_class(b);
    if (ca != cb) return ca < cb;
    switch (ca) {
      case 0: return false;
      case 1: return as_double(a) < as_double(b);
      default: return std::get<std::string>(a) < std::get<std::string>(b);
    }
  };
  std::sort(rows.begin(), rows.end(),
            [&](const std::vector<Value>& a, const std::vector<Value>& b) {
              return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                                  cell_less);
            });
  return rows;
}

bool cells_equal(const Value& a, const Value& b) {
  int ca = type_class(a), cb = type_class(b);
  if (ca != cb) return false;
  switch (ca) {
    case 0: return true;
    case 1: return std::fabs(as_double(a) - as_double(b)) <= kNumericTolerance;
    default: return std::get<std::string>(a) == std::get<std::string>(b);
  }
}

void append_cell_canonical(std::string& out, const Value& v) {
  switch (type_class(v)) {
    case 0:
      out += "N;";
      break;
    case 1: {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "F%.6f;", as_double(v));
      out += buf;
      break;
    }
    default:
      out += "S";
      out += std::get<std::string>(v);
      out += ";";
      break;
  }
}

}  // namespace

std::string_view stage_name(ExecutionStage s) { return kStageNames[static_cast<int>(s)]; }

ExecutionStage stage_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == name) return static_cast<ExecutionStage>(i);
  }
  throw WorkflowError(WorkflowError::Code::Invalid, "unknown stage: " + std::string(name));
}

bool compare_results(const ResultSet& predicted, const ResultSet& gold) {
  if (predicted.columns.size() != gold.columns.size()) return false;
  if (predicted.rows.size() != gold.rows.size()) return false;
  auto a = normalized_sorted_rows(predicted);
  auto b = normalized_sorted_rows(gold);
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (a[r].size() != b[r].size()) return false;
    for (std::size_t c = 0; c < a[r].size(); ++c) {
      if (!cells_equal(a[r][c], b[r][c])) return false;
    }
  }
  return true;
}

std::string result_signature(const ResultSet& rs) {
  std::string canon = "C" + std::to_string(rs.columns.size()) + "|";
  for (const auto& row : normalized_sorted_rows(rs)) {
    for (const auto& v : row) append_cell_canonical(canon, v);
    canon += "|";
  }
  std::uint64_t h = fnv1a64(canon);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExecutionRecord majority_vote(std::span<const ExecutionRecord> records) {
  if (records.empty()) {
    throw WorkflowError(WorkflowError::Code::Invalid, "majority_vote over empty record list");
  }
  struct Group {
    std::size_t count = 0;
    double total_elapsed = 0.0;
    std::size_t first_index = 0;
  };
  std::map<std::string, Group> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (!rec.result_signature) continue;
    auto [it, inserted] = groups.try_emplace(*rec.result_signature);
    if (inserted) it->second.first_index = i;
    it->second.count += 1;
    it->second.total_elapsed += rec.elapsed_seconds;
  }
  if (groups.empty()) return records[0];

  const Group* best = nullptr;
  for (const auto& [sig, g] : groups) {
    if (best == nullptr) {
      best = &g;
      continue;
    }
    if (g.count != best->count) {
      if (g.count > best->count) best = &g;
    } else if (g.total_elapsed != best->total_elapsed) {
      if (g.total_elapsed < best->total_elapsed) best = &g;
    } else if (g.first_index < best->first_index) {
      best = &g;
    }
  }
  return records[best->first_index];
}

}  // namespace dynflow
