#include "jitflow/validate.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "jitflow/error.hpp"

namespace jitflow {

std::vector<std::string> ValidationReport::error_codes() const {
  std::vector<std::string> out;
  for (const auto& i : issues) {
    if (i.severity == Severity::Error) out.push_back(i.code);
  }
  return out;
}

bool ValidationReport::has_error(std::string_view code) const {
  return std::any_of(issues.begin(), issues.end(), [&](const ValidationIssue& i) {
    return i.severity == Severity::Error && i.code == code;
  });
}

std::string ValidationReport::to_text() const {
  std::ostringstream os;
  for (const auto& i : issues) {
    os << (i.severity == Severity::Error ? "error" : "warning") << " " << i.code << " " << i.location
       << ": " << i.message << "\n";
  }
  return os.str();
}

Json ValidationReport::to_json() const {
  Json j;
  j["ok"] = ok;
  j["issues"] = Json::array();
  for (const auto& i : issues) {
    j["issues"].push_back(Json{{"severity", i.severity == Severity::Error ? "error" : "warning"},
                               {"code", i.code},
                               {"location", i.location},
                               {"message", i.message}});
  }
  return j;
}

namespace {

struct Analysis {
  ValidationReport report;
  std::map<std::string, ResolvedModule> resolved;
};

class Validator {
 public:
  Validator(const FlowDefinition& flow, const ModuleCatalog& catalog, const FlowResolver* flows, int depth)
      : flow_(flow), catalog_(catalog), env_{&catalog, flows, depth} {}

  Analysis run() {
    resolve_modules();
    check_connections();
    check_external_inputs();
    check_external_outputs();
    check_fan_in_and_required();
    check_cycles();
    std::stable_sort(out_.report.issues.begin(), out_.report.issues.end(),
                     [](const ValidationIssue& a, const ValidationIssue& b) {
                       if (a.location != b.location) return a.location < b.location;
                       if (a.code != b.code) return a.code < b.code;
                       return a.message < b.message;
                     });
    out_.report.ok = out_.report.error_codes().empty();
    return std::move(out_);
  }

 private:
  void error(const std::string& code, std::string location, std::string message) {
    out_.report.issues.push_back({Severity::Error, code, std::move(location), std::move(message)});
  }

  void resolve_modules() {
    for (const auto& m : flow_.modules) {
      known_ids_.insert(m.id);
      try {
        out_.resolved.emplace(m.id, catalog_.resolve(m, env_));
      } catch (const Error& e) {
        error(e.code(), "module:" + m.id, e.what());
      }
    }
  }

  // nullptr when the module is missing or its spec could not be resolved.
  const ModuleSpec* spec_of(const std::string& id) const {
    auto it = out_.resolved.find(id);
    return it == out_.resolved.end() ? nullptr : &it->second.spec;
  }

  void check_connections() {
    for (const auto& c : flow_.connections) {
      const auto loc = "connection:" + c.from.to_string() + "->" + c.to.to_string();
      bool endpoints_ok = true;
      for (const auto* ep : {&c.from, &c.to}) {
        if (!known_ids_.count(ep->module)) {
          error(issue::kUnknownModule, loc, "no module with id '" + ep->module + "'");
          endpoints_ok = false;
        }
      }
      if (!endpoints_ok) continue;
      const auto* from = spec_of(c.from.module);
      const auto* to = spec_of(c.to.module);
      const OutputPortSpec* out_port = nullptr;
      const InputPortSpec* in_port = nullptr;
      if (from != nullptr) {
        out_port = from->find_output(c.from.port);
        if (out_port == nullptr) {
          error(issue::kUnknownPort, loc, from->kind + " has no output port '" + c.from.port + "'");
        }
      }
      if (to != nullptr) {
        in_port = to->find_input(c.to.port);
        if (in_port == nullptr) {
          error(issue::kUnknownPort, loc, to->kind + " has no input port '" + c.to.port + "'");
        } else {
          incoming_[c.to.to_string()].push_back(loc);
        }
      }
      if (out_port != nullptr && in_port != nullptr && !assignable(out_port->type, in_port->type)) {
        error(issue::kTypeMismatch, loc,
              out_port->type.to_string() + " is not assignable to " + in_port->type.to_string());
      }
      edges_.emplace_back(c.from.module, c.to.module);
    }
  }

  void check_external_inputs() {
    for (const auto& e : flow_.external_inputs) {
      const auto loc = "external-input:" + e.name;
      if (!known_ids_.count(e.target.module)) {
        error(issue::kDanglingBinding, loc, "target module '" + e.target.module + "' does not exist");
        continue;
      }
      const auto* spec = spec_of(e.target.module);
      if (spec == nullptr) continue;
      if (spec->find_input(e.target.port) == nullptr) {
        error(issue::kDanglingBinding, loc, spec->kind + " has no input port '" + e.target.port + "'");
        continue;
      }
      incoming_[e.target.to_string()].push_back(loc);
    }
  }

  void check_external_outputs() {
    for (const auto& e : flow_.external_outputs) {
      const auto loc = "external-output:" + e.name;
      if (!known_ids_.count(e.source.module)) {
        error(issue::kDanglingBinding, loc, "source module '" + e.source.module + "' does not exist");
        continue;
      }
      const auto* spec = spec_of(e.source.module);
      if (spec == nullptr) continue;
      if (spec->find_output(e.source.port) == nullptr) {
        error(issue::kDanglingBinding, loc, spec->kind + " has no output port '" + e.source.port + "'");
      }
    }
  }

  void check_fan_in_and_required() {
    for (const auto& [endpoint, sources] : incoming_) {
      if (sources.size() > 1) {
        error(issue::kFanIn, "input:" + endpoint,
              std::to_string(sources.size()) + " sources feed one input port");
      }
    }
    for (const auto& m : flow_.modules) {
      const auto* spec = spec_of(m.id);
      if (spec == nullptr) continue;
      for (const auto& in : spec->inputs) {
        const auto ep = m.id + "." + in.name;
        if (in.required && !in.default_value && !incoming_.count(ep)) {
          error(issue::kMissingInput, "input:" + ep,
                "required input is neither connected nor bound to an external input");
        }
      }
    }
  }

  void check_cycles() {
    std::map<std::string, std::set<std::string>> succ;
    std::map<std::string, int> indegree;
    for (const auto& id : known_ids_) indegree[id] = 0;
    for (const auto& [from, to] : edges_) {
      if (succ[from].insert(to).second) ++indegree[to];
    }
    std::queue<std::string> ready;
    for (const auto& [id, deg] : indegree) {
      if (deg == 0) ready.push(id);
    }
    std::size_t visited = 0;
    while (!ready.empty()) {
      auto id = ready.front();
      ready.pop();
      ++visited;
      for (const auto& next : succ[id]) {
        if (--indegree[next] == 0) ready.push(next);
      }
    }
    if (visited == indegree.size()) return;
    std::vector<std::string> stuck;
    for (const auto& [id, deg] : indegree) {
      if (deg > 0) stuck.push_back(id);
    }
    std::string list;
    for (const auto& id : stuck) list += (list.empty() ? "" : ", ") + id;
    error(issue::kCycle, "module:" + stuck.front(), "connections form a cycle through " + list);
  }

  const FlowDefinition& flow_;
  const ModuleCatalog& catalog_;
  ResolveEnv env_;
  Analysis out_;
  std::set<std::string> known_ids_;
  std::map<std::string, std::vector<std::string>> incoming_;
  std::vector<std::pair<std::string, std::string>> edges_;
};

}  // namespace

ValidationReport validate_flow(const FlowDefinition& flow, const ModuleCatalog& catalog,
                               const FlowResolver* flows, int depth) {
  return Validator(flow, catalog, flows, depth).run().report;
}

FlowInterface flow_interface(const FlowDefinition& flow, const ModuleCatalog& catalog,
                             const FlowResolver* flows, int depth) {
  auto analysis = Validator(flow, catalog, flows, depth).run();
  if (!analysis.report.ok) {
    // Surface nested depth errors unchanged so callers can tell recursion apart.
    for (const auto& i : analysis.report.issues) {
      if (i.code == issue::kDepthExceeded) throw Error(issue::kDepthExceeded, i.message);
    }
    throw Error(issue::kInvalidReference,
                "flow '" + flow.name + "' does not validate:\n" + analysis.report.to_text());
  }
  FlowInterface out;
  for (const auto& e : flow.external_inputs) {
    const auto& spec = analysis.resolved.at(e.target.module).spec;
    out.inputs.push_back({e.name, spec.find_input(e.target.port)->type});
  }
  for (const auto& e : flow.external_outputs) {
    const auto& spec = analysis.resolved.at(e.source.module).spec;
    out.outputs.push_back({e.name, spec.find_output(e.source.port)->type});
  }
  return out;
}

std::vector<std::string> topological_order(const FlowDefinition& flow) {
  std::map<std::string, std::set<std::string>> succ;
  std::map<std::string, int> indegree;
  for (const auto& m : flow.modules) indegree[m.id] = 0;
  for (const auto& c : flow.connections) {
    if (!indegree.count(c.from.module) || !indegree.count(c.to.module)) continue;
    if (succ[c.from.module].insert(c.to.module).second) ++indegree[c.to.module];
  }
  std::set<std::string> ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.insert(id);
  }
  std::vector<std::string> order;
  while (!ready.empty()) {
    auto id = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(id);
    for (const auto& next : succ[id]) {
      if (--indegree[next] == 0) ready.insert(next);
    }
  }
  if (order.size() != indegree.size()) throw Error("cycle", "flow '" + flow.name + "' contains a cycle");
  return order;
}

}  // namespace jitflow
