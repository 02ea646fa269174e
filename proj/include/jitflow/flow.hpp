#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "jitflow/types.hpp"

namespace jitflow {

/// "<moduleId>.<portName>"
struct Endpoint {
  std::string module;
  std::string port;

  [[nodiscard]] std::string to_string() const { return module + "." + port; }
  /// Throws Error("schema") on malformed text.
  static Endpoint parse(std::string_view text);

  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

struct ModuleInstance {
  std::string id;
  std::string kind;
  Json params = Json::object();  // name -> scalar literal
  bool gated = false;

  friend bool operator==(const ModuleInstance&, const ModuleInstance&) = default;
};

struct Connection {
  Endpoint from;
  Endpoint to;

  friend auto operator<=>(const Connection&, const Connection&) = default;
};

struct ExternalInput {
  std::string name;
  Endpoint target;

  friend bool operator==(const ExternalInput&, const ExternalInput&) = default;
};

struct ExternalOutput {
  std::string name;
  Endpoint source;

  friend bool operator==(const ExternalOutput&, const ExternalOutput&) = default;
};

struct FlowDefinition {
  std::string name;
  std::int64_t version = 1;
  std::vector<ModuleInstance> modules;
  std::vector<Connection> connections;
  std::vector<ExternalInput> external_inputs;
  std::vector<ExternalOutput> external_outputs;

  [[nodiscard]] const ModuleInstance* find_module(std::string_view id) const;
};

/// Structural equality: module and connection order are not significant,
/// external binding order is (it defines an App Reference's port order).
bool operator==(const FlowDefinition& a, const FlowDefinition& b);

/// Modules sorted by id, connections sorted lexicographically.
FlowDefinition canonicalize(FlowDefinition flow);

/// True for [A-Za-z_][A-Za-z0-9_]*
bool is_identifier(std::string_view s);

/// Checks the structural invariants every FlowDefinition must hold
/// (identifier syntax, unique module ids, unique external names).
/// Throws Error("schema").
void check_flow_structure(const FlowDefinition& flow);

/// Parses the ".flow.json" document. Throws Error("syntax") with the byte
/// position for malformed JSON and Error("schema") naming the offending field.
FlowDefinition parse_flow_document(std::string_view text);
FlowDefinition flow_from_json(const Json& doc);

/// Canonical document: fixed key order, modules sorted by id, connections
/// sorted, two-space indentation, trailing newline.
std::string serialize_flow(const FlowDefinition& flow);
nlohmann::ordered_json flow_to_json(const FlowDefinition& flow);

}  // namespace jitflow
