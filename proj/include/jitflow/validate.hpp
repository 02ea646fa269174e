#pragma once

#include <map>
#include <string>
#include <vector>

#include "jitflow/catalog.hpp"
#include "jitflow/flow.hpp"

namespace jitflow {

enum class Severity { Error, Warning };

struct ValidationIssue {
  Severity severity = Severity::Error;
  std::string code;
  std::string location;  // "module:c", "connection:a.Result->c.Param1", ...
  std::string message;

  friend bool operator==(const ValidationIssue&, const ValidationIssue&) = default;
};

struct ValidationReport {
  bool ok = true;
  std::vector<ValidationIssue> issues;  // sorted by location

  [[nodiscard]] std::vector<std::string> error_codes() const;
  [[nodiscard]] bool has_error(std::string_view code) const;
  /// One "severity code location: message" line per issue.
  [[nodiscard]] std::string to_text() const;
  [[nodiscard]] Json to_json() const;
};

/// Error codes reported by validate_flow.
namespace issue {
inline constexpr const char* kUnknownKind = "unknown-kind";
inline constexpr const char* kUnknownModule = "unknown-module";
inline constexpr const char* kUnknownPort = "unknown-port";
inline constexpr const char* kUnknownParam = "unknown-param";
inline constexpr const char* kMissingParam = "missing-param";
inline constexpr const char* kInvalidParam = "invalid-param";
inline constexpr const char* kMissingInput = "missing-input";
inline constexpr const char* kTypeMismatch = "type-mismatch";
inline constexpr const char* kCycle = "cycle";
inline constexpr const char* kFanIn = "fan-in";
inline constexpr const char* kDanglingBinding = "dangling-binding";
inline constexpr const char* kUnknownFlow = "unknown-flow";
inline constexpr const char* kDepthExceeded = "depth-exceeded";
inline constexpr const char* kInvalidReference = "invalid-reference";
}  // namespace issue

/// Static checks: known kinds and ports, params, required inputs, types per
/// assignable(), acyclicity, fan-in of one per input, external bindings.
/// Problems become report entries; this never throws.
ValidationReport validate_flow(const FlowDefinition& flow, const ModuleCatalog& catalog,
                               const FlowResolver* flows = nullptr, int depth = 0);

struct TypedPort {
  std::string name;
  PortType type;
};

/// Typed external surface of a flow: what an App Reference to it exposes.
struct FlowInterface {
  std::vector<TypedPort> inputs;
  std::vector<TypedPort> outputs;
};

/// Resolves the interface of a flow that validates ok at `depth`.
/// Throws Error("invalid-reference") carrying the report text otherwise.
FlowInterface flow_interface(const FlowDefinition& flow, const ModuleCatalog& catalog,
                             const FlowResolver* flows, int depth);

/// Topological order of module ids (ties broken by id). Throws
/// Error("cycle") when the connection graph is cyclic.
std::vector<std::string> topological_order(const FlowDefinition& flow);

}  // namespace jitflow
