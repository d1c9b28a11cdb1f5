#include "dynflow/sqlite_backend.hpp"

#include <sqlite3.h>

#include <chrono>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dynflow {

struct SqliteBackend::Connection {
  sqlite3* db = nullptr;

  ~Connection() {
    if (db != nullptr) sqlite3_close(db);
  }
};

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct BudgetCtx {
  std::chrono::steady_clock::time_point deadline;
};

int progress_callback(void* arg) {
  auto* ctx = static_cast<BudgetCtx*>(arg);
  return std::chrono::steady_clock::now() > ctx->deadline ? 1 : 0;
}

Value column_value(sqlite3_stmt* stmt, int col) {
  switch (sqlite3_column_type(stmt, col)) {
    case SQLITE_INTEGER:
      return Value{static_cast<std::int64_t>(sqlite3_column_int64(stmt, col))};
    case SQLITE_FLOAT:
      return Value{sqlite3_column_double(stmt, col)};
    case SQLITE_NULL:
      return Value{std::monostate{}};
    default: {
      const unsigned char* text = sqlite3_column_text(stmt, col);
      return Value{std::string(text != nullptr ? reinterpret_cast<const char*>(text) : "")};
    }
  }
}

}  // namespace

SqliteBackend::SqliteBackend() = default;
SqliteBackend::~SqliteBackend() = default;

SqliteBackend::Connection* SqliteBackend::connection_for(const std::string& db_ref) {
  auto it = connections_.find(db_ref);
  if (it != connections_.end()) return it->second.get();

  auto conn = std::make_unique<Connection>();
  if (ends_with(db_ref, ".sql")) {
    if (sqlite3_open(":memory:", &conn->db) != SQLITE_OK) {
      throw std::runtime_error("cannot open in-memory sqlite database");
    }
    std::ifstream in(db_ref);
    if (!in) throw std::runtime_error("cannot open sql dump: " + db_ref);
    std::stringstream dump;
    dump << in.rdbuf();
    char* err = nullptr;
    if (sqlite3_exec(conn->db, dump.str().c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
      std::string message = err != nullptr ? err : "unknown error";
      sqlite3_free(err);
      throw std::runtime_error("sql dump failed to load (" + db_ref + "): " + message);
    }
  } else {
    if (sqlite3_open_v2(db_ref.c_str(), &conn->db, SQLITE_OPEN_READONLY, nullptr) != SQLITE_OK) {
      throw std::runtime_error("cannot open sqlite database: " + db_ref);
    }
  }
  auto* raw = conn.get();
  connections_.emplace(db_ref, std::move(conn));
  return raw;
}

ExecuteResult SqliteBackend::execute(const std::string& sql, const std::string& db_ref,
                                     double budget_seconds) {
  std::lock_guard<std::mutex> lock(mu_);
  Connection* conn;
  try {
    conn = connection_for(db_ref);
  } catch (const std::exception& e) {
    return BackendError{e.what()};
  }

  BudgetCtx budget{std::chrono::steady_clock::now() +
                   std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                       std::chrono::duration<double>(std::max(budget_seconds, 0.0)))};
  sqlite3_progress_handler(conn->db, 1000, progress_callback, &budget);

  sqlite3_stmt* stmt = nullptr;
  const char* tail = nullptr;
  if (sqlite3_prepare_v2(conn->db, sql.c_str(), -1, &stmt, &tail) != SQLITE_OK) {
    sqlite3_progress_handler(conn->db, 0, nullptr, nullptr);
    return BackendError{sqlite3_errmsg(conn->db)};
  }
  if (stmt == nullptr) {
    sqlite3_progress_handler(conn->db, 0, nullptr, nullptr);
    return BackendError{"empty statement"};
  }

  ResultSet rs;
  const int ncol = sqlite3_column_count(stmt);
  for (int c = 0; c < ncol; ++c) {
    const char* name = sqlite3_column_name(stmt, c);
    rs.columns.push_back(name != nullptr ? name : "");
  }

  int rc;
  while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
    std::vector<Value> row;
    row.reserve(static_cast<std::size_t>(ncol));
    for (int c = 0; c < ncol; ++c) row.push_back(column_value(stmt, c));
    rs.rows.push_back(std::move(row));
  }
  sqlite3_finalize(stmt);
  sqlite3_progress_handler(conn->db, 0, nullptr, nullptr);

  if (rc != SQLITE_DONE) {
    if (rc == SQLITE_INTERRUPT) return BackendError{"statement exceeded budget"};
    return BackendError{sqlite3_errmsg(conn->db)};
  }
  return rs;
}

}  // namespace dynflow
