#include "jitflow/catalog.hpp"

#include <set>
#include <sstream>

#include "jitflow/error.hpp"

namespace jitflow {

const char* param_kind_name(ParamKind kind) {
  switch (kind) {
    case ParamKind::Text: return "Text";
    case ParamKind::Int: return "Int";
    case ParamKind::Real: return "Real";
    case ParamKind::Bool: return "Bool";
  }
  return "?";
}

const ParamSpec* ModuleSpec::find_param(std::string_view name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const InputPortSpec* ModuleSpec::find_input(std::string_view name) const {
  for (const auto& p : inputs) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const OutputPortSpec* ModuleSpec::find_output(std::string_view name) const {
  for (const auto& p : outputs) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Value* ModuleCall::input(std::string_view port) const {
  auto it = inputs.find(std::string(port));
  return it == inputs.end() ? nullptr : &it->second;
}

std::string ModuleCall::param_text(std::string_view name) const {
  auto it = resolved.params.find(std::string(name));
  if (it == resolved.params.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

std::int64_t ModuleCall::param_int(std::string_view name) const {
  auto it = resolved.params.find(std::string(name));
  if (it == resolved.params.end() || !it->is_number_integer()) {
    throw Error("invalid-param", "param " + std::string(name) + " is not an integer");
  }
  return it->get<std::int64_t>();
}

namespace {

void check_unique_ports(const ModuleSpec& spec) {
  std::set<std::string> names;
  for (const auto& p : spec.inputs) {
    if (!names.insert(p.name).second) throw Error("duplicate-port", spec.kind + ": port " + p.name);
  }
  for (const auto& p : spec.outputs) {
    if (!names.insert(p.name).second) throw Error("duplicate-port", spec.kind + ": port " + p.name);
  }
}

bool param_matches(const ParamSpec& spec, const Json& value) {
  switch (spec.kind) {
    case ParamKind::Text:
      if (!value.is_string()) return false;
      if (!spec.choices.empty()) {
        auto s = value.get<std::string>();
        return std::find(spec.choices.begin(), spec.choices.end(), s) != spec.choices.end();
      }
      return true;
    case ParamKind::Int: return value.is_number_integer();
    case ParamKind::Real: return value.is_number();
    case ParamKind::Bool: return value.is_boolean();
  }
  return false;
}

}  // namespace

void ModuleCatalog::add(ModuleKind kind) {
  check_unique_ports(kind.spec);
  auto name = kind.spec.kind;
  if (!kinds_.emplace(name, std::move(kind)).second) {
    throw Error("duplicate-kind", "module kind " + name + " already registered");
  }
}

const ModuleKind* ModuleCatalog::find(std::string_view kind) const {
  auto it = kinds_.find(kind);
  return it == kinds_.end() ? nullptr : &it->second;
}

std::vector<std::string> ModuleCatalog::kinds() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : kinds_) out.push_back(name);
  return out;
}

ResolvedModule ModuleCatalog::resolve(const ModuleInstance& module, const ResolveEnv& env) const {
  const auto* kind = find(module.kind);
  if (kind == nullptr) throw Error("unknown-kind", "unknown module kind '" + module.kind + "'");

  Json params = Json::object();
  for (const auto& [name, value] : module.params.items()) {
    const auto* ps = kind->spec.find_param(name);
    if (ps == nullptr) {
      throw Error("unknown-param", module.kind + " has no parameter '" + name + "'");
    }
    if (!param_matches(*ps, value)) {
      std::string expected = param_kind_name(ps->kind);
      if (!ps->choices.empty()) {
        expected = "one of";
        for (const auto& c : ps->choices) expected += " \"" + c + "\"";
      }
      throw Error("invalid-param", "parameter " + name + " of " + module.kind + " must be " + expected +
                                       ", got " + value.dump());
    }
    params[name] = value;
  }
  for (const auto& ps : kind->spec.params) {
    if (params.contains(ps.name)) continue;
    if (!ps.default_value.is_null()) {
      params[ps.name] = ps.default_value;
    } else if (ps.required) {
      throw Error("missing-param", module.kind + " requires parameter '" + ps.name + "'");
    }
  }

  ResolvedModule out{kind->spec, params};
  if (kind->resolve) {
    out.spec = kind->resolve(kind->spec, params, env);
    check_unique_ports(out.spec);
  }
  return out;
}

Json spec_to_json(const ModuleSpec& spec) {
  Json j;
  j["kind"] = spec.kind;
  j["description"] = spec.description;
  j["params"] = Json::array();
  for (const auto& p : spec.params) {
    Json pj{{"name", p.name}, {"kind", param_kind_name(p.kind)}, {"required", p.required}};
    if (!p.default_value.is_null()) pj["default"] = p.default_value;
    if (!p.choices.empty()) pj["choices"] = p.choices;
    j["params"].push_back(std::move(pj));
  }
  j["inputs"] = Json::array();
  for (const auto& p : spec.inputs) {
    Json pj{{"name", p.name}, {"type", p.type.to_string()}, {"required", p.required}};
    if (p.default_value) pj["default"] = jitflow::to_json(*p.default_value);
    j["inputs"].push_back(std::move(pj));
  }
  j["outputs"] = Json::array();
  for (const auto& p : spec.outputs) {
    j["outputs"].push_back(Json{{"name", p.name}, {"type", p.type.to_string()}});
  }
  return j;
}

Json ModuleCatalog::to_json() const {
  Json out = Json::array();
  for (const auto& [_, kind] : kinds_) out.push_back(spec_to_json(kind.spec));
  return out;
}

std::string ModuleCatalog::summary() const {
  std::ostringstream os;
  for (const auto& [name, kind] : kinds_) {
    const auto& spec = kind.spec;
    os << "- " << name << ": " << spec.description << "\n";
    if (!spec.params.empty()) {
      os << "    params:";
      for (const auto& p : spec.params) {
        os << " " << p.name << ":" << param_kind_name(p.kind);
        if (!p.choices.empty()) {
          os << "(";
          for (std::size_t i = 0; i < p.choices.size(); ++i) os << (i ? "|" : "") << p.choices[i];
          os << ")";
        }
        if (p.required) {
          os << " (required)";
        } else if (!p.default_value.is_null()) {
          os << "=" << p.default_value.dump();
        }
      }
      os << "\n";
    }
    if (!spec.inputs.empty()) {
      os << "    inputs:";
      for (const auto& p : spec.inputs) {
        os << " " << p.name << ":" << p.type.to_string() << (p.required ? "" : "?");
      }
      os << "\n";
    }
    if (!spec.outputs.empty()) {
      os << "    outputs:";
      for (const auto& p : spec.outputs) os << " " << p.name << ":" << p.type.to_string();
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace jitflow
