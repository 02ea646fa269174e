#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "jitflow/flow.hpp"
#include "jitflow/types.hpp"

namespace jitflow {

enum class ParamKind { Text, Int, Real, Bool };

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::Text;
  bool required = false;
  Json default_value;                // null when absent
  std::vector<std::string> choices;  // non-empty restricts Text params
};

struct InputPortSpec {
  std::string name;
  PortType type;
  bool required = true;
  std::optional<Value> default_value;
};

struct OutputPortSpec {
  std::string name;
  PortType type;
};

/// Ports and parameters of a module kind. Specs of parameterized kinds are
/// resolved against an instance's params before type checking.
struct ModuleSpec {
  std::string kind;
  std::string description;
  std::vector<ParamSpec> params;
  std::vector<InputPortSpec> inputs;
  std::vector<OutputPortSpec> outputs;

  [[nodiscard]] const ParamSpec* find_param(std::string_view name) const;
  [[nodiscard]] const InputPortSpec* find_input(std::string_view name) const;
  [[nodiscard]] const OutputPortSpec* find_output(std::string_view name) const;
};

/// Lookup of stored flows by id, used by App Reference modules.
class FlowResolver {
 public:
  virtual ~FlowResolver() = default;
  [[nodiscard]] virtual std::optional<FlowDefinition> find_flow(std::string_view id) const = 0;
};

inline constexpr int kMaxNesting = 16;

class ModuleCatalog;

struct ResolveEnv {
  const ModuleCatalog* catalog = nullptr;
  const FlowResolver* flows = nullptr;
  int depth = 0;  // nesting depth of the flow owning the module
};

/// A module instance with its spec resolved and defaults filled in.
struct ResolvedModule {
  ModuleSpec spec;
  Json params;
};

struct ExecutionContext;

struct ModuleCall {
  const ModuleInstance& module;
  const ResolvedModule& resolved;
  const std::map<std::string, Value>& inputs;  // only endpoints that hold values
  const ExecutionContext& ctx;
  std::string run_id;
  int depth = 0;
  std::stop_token stop;

  [[nodiscard]] const Value* input(std::string_view port) const;
  [[nodiscard]] std::string param_text(std::string_view name) const;
  [[nodiscard]] std::int64_t param_int(std::string_view name) const;
};

struct ModuleResult {
  std::map<std::string, Value> outputs;
  Json detail = Json::object();
};

using ModuleExecutor = std::function<ModuleResult(const ModuleCall&)>;
/// Computes the instance spec from the kind's base spec and effective params.
/// Throws Error on params it cannot accept.
using SpecResolver = std::function<ModuleSpec(const ModuleSpec& base, const Json& params, const ResolveEnv&)>;

struct ModuleKind {
  ModuleSpec spec;
  SpecResolver resolve;  // empty for fixed-port kinds
  ModuleExecutor execute;
  /// External input/output passthrough kinds.
  bool external_input = false;
  bool external_output = false;
};

class ModuleCatalog {
 public:
  /// Throws Error("duplicate-kind") when the kind exists or the spec
  /// repeats a port name.
  void add(ModuleKind kind);

  [[nodiscard]] const ModuleKind* find(std::string_view kind) const;
  [[nodiscard]] bool empty() const noexcept { return kinds_.empty(); }
  [[nodiscard]] std::vector<std::string> kinds() const;

  /// Checks params against the kind's ParamSpecs, fills defaults and
  /// resolves parameterized ports. Throws Error with code unknown-kind,
  /// unknown-param, missing-param, invalid-param or an App Reference error.
  [[nodiscard]] ResolvedModule resolve(const ModuleInstance& module, const ResolveEnv& env) const;

  /// Catalog listing for /catalog and the CLI.
  [[nodiscard]] Json to_json() const;
  /// Compact one-line-per-kind summary used in synthesis prompts.
  [[nodiscard]] std::string summary() const;

 private:
  std::map<std::string, ModuleKind, std::less<>> kinds_;
};

const char* param_kind_name(ParamKind kind);
Json spec_to_json(const ModuleSpec& spec);

}  // namespace jitflow
