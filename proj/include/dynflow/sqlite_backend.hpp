#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "dynflow/exec.hpp"

namespace dynflow {

// Embedded SQLite backend. db_ref is a path: a ".sql" dump is replayed into
// an in-memory database (cached per ref), anything else is opened read-only
// as a database file. Budget enforcement interrupts long statements via the
// progress handler.
class SqliteBackend : public RelationalBackend {
 public:
  SqliteBackend();
  ~SqliteBackend() override;

  ExecuteResult execute(const std::string& sql, const std::string& db_ref,
                        double budget_seconds) override;
  bool concurrent_safe() const override { return true; }  // self-serializing

 private:
  struct Connection;
  Connection* connection_for(const std::string& db_ref);

  std::mutex mu_;
  std::map<std::string, std::unique_ptr<Connection>> connections_;
};

}  // namespace dynflow
