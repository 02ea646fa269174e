#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "jitflow/runtime.hpp"
#include "jitflow/store.hpp"

namespace httplib {
class Server;
}

namespace jitflow {

struct ServiceConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;
  /// Gate policy for runs whose options omit requireApproval.
  bool require_approval_default = true;
};

struct ActiveRun;

/// JSON API under /api/v1 over a Runtime whose data_dir holds the stores:
/// catalog, flows, validation, runs with approval and server-sent events,
/// and the code generation and synthesis endpoints.
class Service {
 public:
  /// Throws Error("config") when the runtime has no data directory.
  Service(Runtime& runtime, ServiceConfig config = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  /// Throws Error("bind").
  int start();
  /// Blocks until stop().
  void wait();
  void stop();
  [[nodiscard]] int port() const noexcept { return port_; }

 private:
  void routes();
  void recover_interrupted_runs();
  std::shared_ptr<ActiveRun> active(const std::string& run_id);
  void launch(const std::shared_ptr<ActiveRun>& run, std::function<Run()> body);

  Runtime& runtime_;
  ServiceConfig config_;
  RunStore runs_store_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex runs_mutex_;
  std::map<std::string, std::shared_ptr<ActiveRun>> runs_;
  std::atomic<bool> stopping_{false};
};

}  // namespace jitflow
