#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "jitflow/catalog.hpp"
#include "jitflow/engine.hpp"
#include "jitflow/flow.hpp"

namespace jitflow {

/// Writes via a temporary sibling and rename so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// Reads .flow files as DSL and anything else as flow JSON.
FlowDefinition load_flow_file(const std::filesystem::path& path);
void save_flow_file(const std::filesystem::path& path, const FlowDefinition& flow);

/// Stored flows by id: <root>/flows/<id>.flow.json. Without a root the store
/// lives in memory only. The packaged jit-codegen flow is always present.
class FlowStore : public FlowResolver {
 public:
  explicit FlowStore(std::optional<std::filesystem::path> root = std::nullopt);

  /// Stores under `id` or, when absent, a content hash of the canonical
  /// serialization. Throws Error("invalid-id") or Error("reserved-id").
  std::string put(const FlowDefinition& flow, std::optional<std::string> id = std::nullopt);
  [[nodiscard]] std::optional<FlowDefinition> find_flow(std::string_view id) const override;
  [[nodiscard]] std::vector<std::string> ids() const;

  static std::string content_id(const FlowDefinition& flow);
  static bool valid_id(std::string_view id);

 private:
  std::optional<std::filesystem::path> root_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, FlowDefinition, std::less<>> flows_;
};

/// Persisted status of one run.
struct RunRecord {
  std::string run_id;
  std::string flow_id;
  RunState state = RunState::Running;
  std::optional<std::string> pending_gate;
  std::string started_at;  // ISO 8601 UTC
  std::optional<std::string> finished_at;
  Json outputs = Json::object();
  Json error;  // null unless failed

  [[nodiscard]] Json to_json() const;
  static RunRecord from_json(const Json& j);
};

std::string iso8601(std::chrono::system_clock::time_point t);

/// <root>/runs/<runId>/{input.json, trace.jsonl, outputs.json, status.json}.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  void create(const RunRecord& record, const Json& inputs);
  void append_event(const std::string& run_id, const TraceEvent& event);
  void write_status(const RunRecord& record);

  [[nodiscard]] std::optional<RunRecord> load(const std::string& run_id) const;
  [[nodiscard]] std::vector<std::string> trace_lines(const std::string& run_id) const;
  [[nodiscard]] Json inputs(const std::string& run_id) const;
  [[nodiscard]] std::vector<std::string> run_ids() const;
  [[nodiscard]] std::filesystem::path dir(const std::string& run_id) const;

 private:
  std::filesystem::path root_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
  std::mutex& lock_for(const std::string& run_id);
};

}  // namespace jitflow
