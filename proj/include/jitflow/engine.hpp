#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "jitflow/catalog.hpp"
#include "jitflow/flow.hpp"
#include "jitflow/types.hpp"

namespace jitflow {

namespace llm {
class Gateway;
}

/// How code-executing scripts are launched.
struct InterpreterConfig {
  std::string command = "python3";
  std::chrono::milliseconds timeout{30'000};
  /// Modules imported once by a long-lived interpreter that forks one child
  /// per script; empty launches a fresh interpreter for every script.
  std::vector<std::string> preload;
};

enum class GatePolicy { Off, Require };

struct TraceEvent;

struct ExecutionContext {
  const ModuleCatalog* catalog = nullptr;
  const FlowResolver* flows = nullptr;
  llm::Gateway* gateway = nullptr;
  InterpreterConfig interpreter;
  GatePolicy gate_policy = GatePolicy::Off;
  std::chrono::milliseconds deadline{120'000};
  /// 1 runs ready modules one at a time.
  std::size_t max_parallel = 4;
  /// `${NAME}` references in Text params are expanded from this map.
  std::map<std::string, std::string> variables;
  /// Called, serialized by the run coordinator, for every appended event.
  std::function<void(const TraceEvent&)> on_event;
};

enum class RunState { Running, PausedForApproval, Completed, Failed, Rejected };
enum class ModuleState { Pending, Ready, Executing, Done, Failed, Skipped };

const char* to_string(RunState s);
const char* to_string(ModuleState s);
RunState run_state_from_string(std::string_view s);

enum class EventKind {
  RunStarted,
  ModuleStarted,
  ModuleCompleted,
  ModuleFailed,
  RunPaused,
  GateDecided,
  RunCompleted,
  RunFailed
};

const char* to_string(EventKind e);
EventKind event_kind_from_string(std::string_view s);

struct TraceEvent {
  std::int64_t ts = 0;  // ms since run start, non-decreasing
  EventKind event = EventKind::RunStarted;
  std::optional<std::string> module_id;
  Json detail = Json::object();

  /// {"ts", "event", "moduleId", "detail"} in that order.
  [[nodiscard]] std::string to_json_line() const;
  static TraceEvent from_json(const Json& j);
  [[nodiscard]] bool is_terminal() const;
};

struct RunPlan {
  FlowDefinition flow;
  std::map<std::string, ResolvedModule> resolved;  // moduleId -> spec with params substituted
  std::map<std::string, Value> input_bindings;     // externalInputName -> coerced value
  std::vector<std::string> topological_order;
  int depth = 0;
};

struct Run {
  std::string run_id;
  RunPlan plan;
  RunState state = RunState::Running;
  std::map<std::string, ModuleState> module_states;
  std::map<std::string, Value> port_values;  // "module.port" -> value
  std::map<std::string, Value> outputs;
  std::vector<TraceEvent> trace;

  /// Gate awaiting a decision while state == PausedForApproval.
  std::optional<std::string> pending_gate;
  std::map<std::string, bool> gate_decisions;  // moduleId -> approved

  std::chrono::system_clock::time_point started_at;
  std::optional<std::chrono::system_clock::time_point> finished_at;
  std::chrono::milliseconds active_time{0};
};

/// Binds and coerces the external inputs. `flow` must validate ok.
/// Throws Error("missing-input") naming the input, Error("type-mismatch")
/// naming input and expected type, Error("unknown-input") for extra names,
/// or Error("invalid-flow") when validation fails.
RunPlan plan_run(const FlowDefinition& flow, const ModuleCatalog& catalog,
                 const std::map<std::string, Value>& inputs, const FlowResolver* flows = nullptr,
                 int depth = 0);

/// Converts JSON input values using the declared types of the flow's
/// external inputs (used by the CLI and the service).
std::map<std::string, Value> bind_json_inputs(const FlowDefinition& flow, const ModuleCatalog& catalog,
                                              const Json& inputs, const FlowResolver* flows = nullptr);

/// Runs to completion, failure, or the first gate that needs approval.
Run execute_run(const RunPlan& plan, const ExecutionContext& ctx, std::string run_id = {});

/// Continues a run paused at `module_id`. Approve runs the module and the
/// rest of the flow; reject ends the run in state Rejected. Repeating an
/// identical decision returns the run unchanged. Throws Error("wrong-state")
/// or Error("unknown-gate").
Run resume_run(Run run, const std::string& module_id, bool approve, const ExecutionContext& ctx);

/// Loads the flow an App Reference points at. Throws Error("unknown-flow")
/// or Error("depth-exceeded") when depth > kMaxNesting.
FlowDefinition resolve_app_reference(std::string_view flow_id, const FlowResolver* store, int depth);

/// Replaces `${NAME}` with variables[NAME]; throws Error("unbound-variable").
std::string expand_variables(std::string_view text, const std::map<std::string, std::string>& variables);

std::string new_run_id();

}  // namespace jitflow
