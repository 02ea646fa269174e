#include "jitflow/flow.hpp"

#include <algorithm>
#include <set>

#include "jitflow/error.hpp"

namespace jitflow {

namespace {

[[noreturn]] void schema_error(const std::string& field, const std::string& reason) {
  throw Error("schema", field + ": " + reason);
}

const Json& require(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(where + "." + key, "missing");
  return *it;
}

std::string require_string(const Json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) schema_error(where + "." + key, "expected a string");
  return v.get<std::string>();
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> known,
                    const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      schema_error(where.empty() ? key : where + "." + key, "unknown field");
    }
  }
}

const Json& require_array(const Json& obj, const char* key) {
  const auto& v = require(obj, key, "flow");
  if (!v.is_array()) schema_error(key, "expected an array");
  return v;
}

Endpoint endpoint_field(const Json& obj, const char* key, const std::string& where) {
  auto text = require_string(obj, key, where);
  try {
    return Endpoint::parse(text);
  } catch (const Error& e) {
    schema_error(where + "." + key, e.what());
  }
}

}  // namespace

Endpoint Endpoint::parse(std::string_view text) {
  auto dot = text.find('.');
  if (dot == std::string_view::npos || text.find('.', dot + 1) != std::string_view::npos) {
    throw Error("schema", "endpoint '" + std::string(text) + "' is not <moduleId>.<portName>");
  }
  Endpoint ep{std::string(text.substr(0, dot)), std::string(text.substr(dot + 1))};
  if (!is_identifier(ep.module) || !is_identifier(ep.port)) {
    throw Error("schema", "endpoint '" + std::string(text) + "' is not <moduleId>.<portName>");
  }
  return ep;
}

const ModuleInstance* FlowDefinition::find_module(std::string_view id) const {
  for (const auto& m : modules) {
    if (m.id == id) return &m;
  }
  return nullptr;
}

FlowDefinition canonicalize(FlowDefinition flow) {
  std::sort(flow.modules.begin(), flow.modules.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(flow.connections.begin(), flow.connections.end());
  return flow;
}

bool operator==(const FlowDefinition& a, const FlowDefinition& b) {
  if (a.name != b.name || a.version != b.version || a.external_inputs != b.external_inputs ||
      a.external_outputs != b.external_outputs || a.modules.size() != b.modules.size() ||
      a.connections.size() != b.connections.size()) {
    return false;
  }
  auto ca = canonicalize(a);
  auto cb = canonicalize(b);
  return ca.modules == cb.modules && ca.connections == cb.connections;
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto head = static_cast<unsigned char>(s.front());
  if (!(std::isalpha(head) || head == '_')) return false;
  return std::all_of(s.begin() + 1, s.end(), [](char ch) {
    auto c = static_cast<unsigned char>(ch);
    return std::isalnum(c) || c == '_';
  });
}

void check_flow_structure(const FlowDefinition& flow) {
  std::set<std::string> ids;
  for (const auto& m : flow.modules) {
    if (!is_identifier(m.id)) schema_error("modules", "module id '" + m.id + "' is not an identifier");
    if (!is_identifier(m.kind)) schema_error("modules." + m.id + ".kind", "'" + m.kind + "' is not an identifier");
    if (!ids.insert(m.id).second) schema_error("modules", "duplicate module id '" + m.id + "'");
    if (!m.params.is_object()) schema_error("modules." + m.id + ".params", "expected an object");
    for (const auto& [name, value] : m.params.items()) {
      if (!is_identifier(name)) schema_error("modules." + m.id + ".params", "'" + name + "' is not an identifier");
      if (!value.is_primitive() || value.is_null()) {
        schema_error("modules." + m.id + ".params." + name, "expected a string, number or boolean");
      }
    }
  }
  std::set<std::string> names;
  for (const auto& in : flow.external_inputs) {
    if (in.name.empty()) schema_error("externalInputs", "empty name");
    if (!names.insert(in.name).second) schema_error("externalInputs", "duplicate name '" + in.name + "'");
  }
  names.clear();
  for (const auto& out : flow.external_outputs) {
    if (out.name.empty()) schema_error("externalOutputs", "empty name");
    if (!names.insert(out.name).second) schema_error("externalOutputs", "duplicate name '" + out.name + "'");
  }
}

FlowDefinition flow_from_json(const Json& doc) {
  if (!doc.is_object()) schema_error("flow", "expected an object");
  reject_unknown(doc, {"name", "version", "modules", "connections", "externalInputs", "externalOutputs"}, "");

  FlowDefinition flow;
  flow.name = require_string(doc, "name", "flow");
  const auto& version = require(doc, "version", "flow");
  if (!version.is_number_integer()) schema_error("version", "expected an integer");
  flow.version = version.get<std::int64_t>();

  for (const auto& m : require_array(doc, "modules")) {
    if (!m.is_object()) schema_error("modules", "expected objects");
    reject_unknown(m, {"id", "kind", "params", "gated"}, "modules[]");
    ModuleInstance mod;
    mod.id = require_string(m, "id", "modules[]");
    mod.kind = require_string(m, "kind", "modules[" + mod.id + "]");
    if (auto it = m.find("params"); it != m.end()) mod.params = *it;
    if (auto it = m.find("gated"); it != m.end()) {
      if (!it->is_boolean()) schema_error("modules[" + mod.id + "].gated", "expected a boolean");
      mod.gated = it->get<bool>();
    }
    flow.modules.push_back(std::move(mod));
  }
  for (const auto& c : require_array(doc, "connections")) {
    if (!c.is_object()) schema_error("connections", "expected objects");
    reject_unknown(c, {"from", "to"}, "connections[]");
    flow.connections.push_back(
        {endpoint_field(c, "from", "connections[]"), endpoint_field(c, "to", "connections[]")});
  }
  for (const auto& e : require_array(doc, "externalInputs")) {
    if (!e.is_object()) schema_error("externalInputs", "expected objects");
    reject_unknown(e, {"name", "target"}, "externalInputs[]");
    flow.external_inputs.push_back(
        {require_string(e, "name", "externalInputs[]"), endpoint_field(e, "target", "externalInputs[]")});
  }
  for (const auto& e : require_array(doc, "externalOutputs")) {
    if (!e.is_object()) schema_error("externalOutputs", "expected objects");
    reject_unknown(e, {"name", "source"}, "externalOutputs[]");
    flow.external_outputs.push_back(
        {require_string(e, "name", "externalOutputs[]"), endpoint_field(e, "source", "externalOutputs[]")});
  }
  check_flow_structure(flow);
  return flow;
}

FlowDefinition parse_flow_document(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error("syntax", "flow document is not valid JSON at byte " + std::to_string(e.byte) +
                              ": " + e.what());
  }
  return flow_from_json(doc);
}

nlohmann::ordered_json flow_to_json(const FlowDefinition& input) {
  using OJson = nlohmann::ordered_json;
  const auto flow = canonicalize(input);
  OJson doc;
  doc["name"] = flow.name;
  doc["version"] = flow.version;
  doc["modules"] = OJson::array();
  for (const auto& m : flow.modules) {
    OJson mod;
    mod["id"] = m.id;
    mod["kind"] = m.kind;
    // Json is std::map-backed, so params come out sorted by name.
    mod["params"] = OJson::parse(m.params.dump());
    mod["gated"] = m.gated;
    doc["modules"].push_back(std::move(mod));
  }
  doc["connections"] = OJson::array();
  for (const auto& c : flow.connections) {
    doc["connections"].push_back(OJson{{"from", c.from.to_string()}, {"to", c.to.to_string()}});
  }
  doc["externalInputs"] = OJson::array();
  for (const auto& e : flow.external_inputs) {
    doc["externalInputs"].push_back(OJson{{"name", e.name}, {"target", e.target.to_string()}});
  }
  doc["externalOutputs"] = OJson::array();
  for (const auto& e : flow.external_outputs) {
    doc["externalOutputs"].push_back(OJson{{"name", e.name}, {"source", e.source.to_string()}});
  }
  return doc;
}

std::string serialize_flow(const FlowDefinition& flow) { return flow_to_json(flow).dump(2) + "\n"; }

}  // namespace jitflow
