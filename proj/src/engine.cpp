#include "jitflow/engine.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <random>
#include <thread>

#include "jitflow/error.hpp"
#include "jitflow/validate.hpp"

namespace jitflow {

const char* to_string(RunState s) {
  switch (s) {
    case RunState::Running: return "running";
    case RunState::PausedForApproval: return "paused_for_approval";
    case RunState::Completed: return "completed";
    case RunState::Failed: return "failed";
    case RunState::Rejected: return "rejected";
  }
  return "?";
}

RunState run_state_from_string(std::string_view s) {
  for (auto st : {RunState::Running, RunState::PausedForApproval, RunState::Completed, RunState::Failed,
                  RunState::Rejected}) {
    if (s == to_string(st)) return st;
  }
  throw Error("schema", "unknown run state '" + std::string(s) + "'");
}

const char* to_string(ModuleState s) {
  switch (s) {
    case ModuleState::Pending: return "pending";
    case ModuleState::Ready: return "ready";
    case ModuleState::Executing: return "executing";
    case ModuleState::Done: return "done";
    case ModuleState::Failed: return "failed";
    case ModuleState::Skipped: return "skipped";
  }
  return "?";
}

const char* to_string(EventKind e) {
  switch (e) {
    case EventKind::RunStarted: return "run_started";
    case EventKind::ModuleStarted: return "module_started";
    case EventKind::ModuleCompleted: return "module_completed";
    case EventKind::ModuleFailed: return "module_failed";
    case EventKind::RunPaused: return "run_paused";
    case EventKind::GateDecided: return "gate_decided";
    case EventKind::RunCompleted: return "run_completed";
    case EventKind::RunFailed: return "run_failed";
  }
  return "?";
}

EventKind event_kind_from_string(std::string_view s) {
  for (auto e : {EventKind::RunStarted, EventKind::ModuleStarted, EventKind::ModuleCompleted,
                 EventKind::ModuleFailed, EventKind::RunPaused, EventKind::GateDecided, EventKind::RunCompleted,
                 EventKind::RunFailed}) {
    if (s == to_string(e)) return e;
  }
  throw Error("schema", "unknown trace event '" + std::string(s) + "'");
}

std::string TraceEvent::to_json_line() const {
  nlohmann::ordered_json j;
  j["ts"] = ts;
  j["event"] = to_string(event);
  j["moduleId"] = module_id ? nlohmann::ordered_json(*module_id) : nlohmann::ordered_json(nullptr);
  j["detail"] = nlohmann::ordered_json::parse(detail.dump());
  return j.dump(-1, ' ', false, Json::error_handler_t::replace);
}

TraceEvent TraceEvent::from_json(const Json& j) {
  TraceEvent e;
  e.ts = j.at("ts").get<std::int64_t>();
  e.event = event_kind_from_string(j.at("event").get<std::string>());
  if (j.contains("moduleId") && j["moduleId"].is_string()) e.module_id = j["moduleId"].get<std::string>();
  if (j.contains("detail")) e.detail = j["detail"];
  return e;
}

bool TraceEvent::is_terminal() const {
  if (event == EventKind::RunCompleted || event == EventKind::RunFailed) return true;
  return event == EventKind::GateDecided && detail.value("decision", "") == "reject";
}

std::string new_run_id() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id;
  auto bits = rng();
  for (int i = 0; i < 16; ++i, bits >>= 4) id += kHex[bits & 0xF];
  return id;
}

std::string expand_variables(std::string_view text, const std::map<std::string, std::string>& variables) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto start = text.find("${", pos);
    if (start == std::string_view::npos) break;
    auto end = text.find('}', start + 2);
    if (end == std::string_view::npos) break;
    auto name = std::string(text.substr(start + 2, end - start - 2));
    if (!is_identifier(name)) {
      out.append(text.substr(pos, end + 1 - pos));
      pos = end + 1;
      continue;
    }
    auto it = variables.find(name);
    if (it == variables.end()) throw Error("unbound-variable", "variable ${" + name + "} is not set");
    out.append(text.substr(pos, start - pos));
    out.append(it->second);
    pos = end + 1;
  }
  out.append(text.substr(pos));
  return out;
}

FlowDefinition resolve_app_reference(std::string_view flow_id, const FlowResolver* store, int depth) {
  if (depth > kMaxNesting) {
    throw Error("depth-exceeded", "App Reference nesting exceeds " + std::to_string(kMaxNesting) +
                                      " while resolving '" + std::string(flow_id) + "'");
  }
  std::optional<FlowDefinition> flow;
  if (store != nullptr) flow = store->find_flow(flow_id);
  if (!flow) throw Error("unknown-flow", "no stored flow with id '" + std::string(flow_id) + "'");
  return *flow;
}

RunPlan plan_run(const FlowDefinition& flow, const ModuleCatalog& catalog,
                 const std::map<std::string, Value>& inputs, const FlowResolver* flows, int depth) {
  auto report = validate_flow(flow, catalog, flows, depth);
  if (!report.ok) throw Error("invalid-flow", "flow '" + flow.name + "' does not validate:\n" + report.to_text());

  RunPlan plan;
  plan.flow = flow;
  plan.depth = depth;
  const ResolveEnv env{&catalog, flows, depth};
  for (const auto& m : flow.modules) plan.resolved.emplace(m.id, catalog.resolve(m, env));

  for (const auto& [name, _] : inputs) {
    auto known = std::any_of(flow.external_inputs.begin(), flow.external_inputs.end(),
                             [&](const ExternalInput& e) { return e.name == name; });
    if (!known) throw Error("unknown-input", "flow '" + flow.name + "' has no external input '" + name + "'");
  }
  for (const auto& e : flow.external_inputs) {
    auto it = inputs.find(e.name);
    if (it == inputs.end()) throw Error("missing-input", "external input '" + e.name + "' is not bound");
    const auto& type = plan.resolved.at(e.target.module).spec.find_input(e.target.port)->type;
    if (!assignable(it->second.type(), type)) {
      throw Error("type-mismatch", "external input '" + e.name + "' expects " + type.to_string() + ", got " +
                                       it->second.type().to_string());
    }
    plan.input_bindings.emplace(e.name, coerce(it->second, type));
  }
  plan.topological_order = topological_order(flow);
  return plan;
}

std::map<std::string, Value> bind_json_inputs(const FlowDefinition& flow, const ModuleCatalog& catalog,
                                              const Json& inputs, const FlowResolver* flows) {
  if (!inputs.is_object()) throw Error("type-mismatch", "inputs must be a JSON object");
  auto iface = flow_interface(flow, catalog, flows, 0);
  std::map<std::string, Value> out;
  for (const auto& [name, value] : inputs.items()) {
    auto it = std::find_if(iface.inputs.begin(), iface.inputs.end(),
                           [&](const TypedPort& p) { return p.name == name; });
    if (it == iface.inputs.end()) {
      throw Error("unknown-input", "flow '" + flow.name + "' has no external input '" + name + "'");
    }
    try {
      out.emplace(name, value_from_json(value, it->type));
    } catch (const Error& e) {
      throw Error("type-mismatch", "external input '" + name + "' expects " + it->type.to_string() + ": " + e.what());
    }
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Completion {
  std::string module_id;
  std::optional<ModuleResult> result;
  std::string error_code;
  std::string error_message;
  Json error_detail = Json::object();
};

class Coordinator {
 public:
  Coordinator(Run& run, const ExecutionContext& ctx) : run_(run), ctx_(ctx) {
    const auto& flow = run_.plan.flow;
    for (const auto& c : flow.connections) {
      fed_.insert(c.to.to_string());
      downstream_[c.from.module].insert(c.to.module);
      fanout_[c.from.to_string()].push_back(c.to);
    }
    for (const auto& e : flow.external_inputs) fed_.insert(e.target.to_string());
  }

  void emit(EventKind kind, std::optional<std::string> module_id, Json detail = Json::object()) {
    using namespace std::chrono;
    TraceEvent e;
    e.ts = duration_cast<milliseconds>(system_clock::now() - run_.started_at).count();
    if (!run_.trace.empty()) e.ts = std::max(e.ts, run_.trace.back().ts);
    e.event = kind;
    e.module_id = std::move(module_id);
    e.detail = std::move(detail);
    run_.trace.push_back(e);
    if (ctx_.on_event) ctx_.on_event(run_.trace.back());
  }

  void drive() {
    run_.state = RunState::Running;
    const auto segment_start = Clock::now();
    const auto deadline = segment_start + (ctx_.deadline - run_.active_time);
    const std::size_t max_parallel = std::max<std::size_t>(1, ctx_.max_parallel);

    while (true) {
      std::vector<std::string> awaiting;
      for (const auto& id : run_.plan.topological_order) {
        auto& st = run_.module_states[id];
        if (st != ModuleState::Pending && st != ModuleState::Ready) continue;
        if (!inputs_ready(id)) continue;
        const auto& module = *run_.plan.flow.find_module(id);
        if (module.gated && ctx_.gate_policy == GatePolicy::Require && !run_.gate_decisions.count(id)) {
          st = ModuleState::Ready;
          awaiting.push_back(id);
          continue;
        }
        if (in_flight_ >= max_parallel) break;
        start(id);
      }

      if (in_flight_ == 0) {
        run_.active_time += std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - segment_start);
        if (!failed_.empty() || any_failed()) {
          finish_failed(Json::object());
        } else if (!awaiting.empty()) {
          pause(awaiting.front());
        } else {
          finish_completed();
        }
        return;
      }

      std::unique_lock lock(mutex_);
      bool have = cv_.wait_until(lock, deadline, [&] { return !completions_.empty(); });
      if (!have) {
        lock.unlock();
        cancel_for_deadline();
        return;
      }
      auto batch = std::move(completions_);
      completions_.clear();
      lock.unlock();
      for (auto& c : batch) complete(std::move(c));
    }
  }

  void skip_with_downstream(const std::string& id) {
    run_.module_states[id] = ModuleState::Skipped;
    skip_downstream(id);
  }

  ~Coordinator() {
    for (auto& t : workers_) {
      if (t.joinable()) t.join();
    }
  }

 private:
  bool any_failed() const {
    return std::any_of(run_.module_states.begin(), run_.module_states.end(),
                       [](const auto& kv) { return kv.second == ModuleState::Failed; });
  }

  bool inputs_ready(const std::string& id) const {
    const auto& spec = run_.plan.resolved.at(id).spec;
    for (const auto& in : spec.inputs) {
      auto ep = id + "." + in.name;
      if (fed_.count(ep) && !run_.port_values.count(ep)) return false;
    }
    return true;
  }

  std::map<std::string, Value> gather_inputs(const std::string& id) const {
    std::map<std::string, Value> inputs;
    const auto& spec = run_.plan.resolved.at(id).spec;
    for (const auto& in : spec.inputs) {
      auto it = run_.port_values.find(id + "." + in.name);
      if (it != run_.port_values.end()) {
        inputs.emplace(in.name, it->second);
      } else if (in.default_value) {
        inputs.emplace(in.name, *in.default_value);
      }
    }
    return inputs;
  }

  void start(const std::string& id) {
    run_.module_states[id] = ModuleState::Executing;
    const auto& module = *run_.plan.flow.find_module(id);
    emit(EventKind::ModuleStarted, id, Json{{"kind", module.kind}});
    ++in_flight_;
    workers_.emplace_back([this, id, inputs = gather_inputs(id), token = stop_.get_token()]() mutable {
      auto completion = invoke(id, inputs, token);
      {
        std::lock_guard lock(mutex_);
        completions_.push_back(std::move(completion));
      }
      cv_.notify_one();
    });
  }

  Completion invoke(const std::string& id, const std::map<std::string, Value>& inputs, std::stop_token token) {
    Completion c;
    c.module_id = id;
    const auto& module = *run_.plan.flow.find_module(id);
    try {
      const auto* kind = ctx_.catalog->find(module.kind);
      if (kind == nullptr || !kind->execute) throw Error("unknown-kind", "no executor for " + module.kind);
      auto resolved = run_.plan.resolved.at(id);
      for (auto& [name, value] : resolved.params.items()) {
        if (value.is_string()) value = expand_variables(value.get<std::string>(), ctx_.variables);
      }
      ModuleCall call{module, resolved, inputs, ctx_, run_.run_id, run_.plan.depth, token};
      auto result = kind->execute(call);
      for (const auto& out : resolved.spec.outputs) {
        auto it = result.outputs.find(out.name);
        if (it == result.outputs.end()) {
          throw Error("missing-output", module.kind + " produced no value for output " + out.name);
        }
        it->second = coerce(it->second, out.type);
      }
      c.result = std::move(result);
    } catch (const Error& e) {
      c.error_code = e.code();
      c.error_message = e.what();
      c.error_detail = e.detail();
    } catch (const std::exception& e) {
      c.error_code = "module-error";
      c.error_message = e.what();
    }
    return c;
  }

  void complete(Completion c) {
    --in_flight_;
    const auto& id = c.module_id;
    if (!c.result) {
      run_.module_states[id] = ModuleState::Failed;
      failed_.push_back(id);
      Json detail = c.error_detail.is_object() ? c.error_detail : Json::object();
      detail["code"] = c.error_code;
      detail["message"] = c.error_message;
      emit(EventKind::ModuleFailed, id, std::move(detail));
      skip_downstream(id);
      return;
    }
    Json outputs = Json::object();
    for (auto& [port, value] : c.result->outputs) {
      const auto ep = id + "." + port;
      outputs[port] = to_json(value);
      if (auto it = fanout_.find(ep); it != fanout_.end()) {
        for (const auto& target : it->second) {
          const auto& type = run_.plan.resolved.at(target.module).spec.find_input(target.port)->type;
          run_.port_values.insert_or_assign(target.to_string(), coerce(value, type));
        }
      }
      run_.port_values.insert_or_assign(ep, value);
    }
    run_.module_states[id] = ModuleState::Done;
    Json detail = c.result->detail;
    detail["outputs"] = std::move(outputs);
    emit(EventKind::ModuleCompleted, id, std::move(detail));
  }

  void skip_downstream(const std::string& id) {
    std::vector<std::string> stack{id};
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      for (const auto& next : downstream_[cur]) {
        auto& st = run_.module_states[next];
        if (st == ModuleState::Pending || st == ModuleState::Ready) {
          st = ModuleState::Skipped;
          stack.push_back(next);
        }
      }
    }
  }

  void pause(const std::string& id) {
    run_.state = RunState::PausedForApproval;
    run_.pending_gate = id;
    Json inputs = Json::object();
    for (const auto& [port, value] : gather_inputs(id)) inputs[port] = to_json(value);
    emit(EventKind::RunPaused, id, Json{{"kind", run_.plan.flow.find_module(id)->kind}, {"inputs", inputs}});
  }

  void finish_completed() {
    Json outputs = Json::object();
    for (const auto& e : run_.plan.flow.external_outputs) {
      auto it = run_.port_values.find(e.source.to_string());
      if (it == run_.port_values.end()) {
        finish_failed(Json{{"reason", "external output '" + e.name + "' was never produced"}});
        return;
      }
      run_.outputs.insert_or_assign(e.name, it->second);
      outputs[e.name] = to_json(it->second);
    }
    run_.state = RunState::Completed;
    run_.finished_at = std::chrono::system_clock::now();
    emit(EventKind::RunCompleted, std::nullopt, Json{{"outputs", outputs}});
  }

  void finish_failed(Json detail) {
    for (auto& [id, st] : run_.module_states) {
      if (st == ModuleState::Pending || st == ModuleState::Ready) st = ModuleState::Skipped;
    }
    Json failed = Json::array();
    for (const auto& [id, st] : run_.module_states) {
      if (st == ModuleState::Failed) failed.push_back(id);
    }
    detail["failedModules"] = failed;
    run_.state = RunState::Failed;
    run_.pending_gate.reset();
    run_.finished_at = std::chrono::system_clock::now();
    emit(EventKind::RunFailed, std::nullopt, std::move(detail));
  }

  void cancel_for_deadline() {
    stop_.request_stop();
    for (auto& t : workers_) {
      if (t.joinable()) t.join();
    }
    for (auto& c : completions_) {
      if (c.result) {
        complete(std::move(c));
      } else {
        c.error_message = "cancelled at run deadline: " + c.error_message;
        complete(std::move(c));
      }
    }
    completions_.clear();
    run_.active_time = ctx_.deadline;
    finish_failed(Json{{"reason", "deadline exceeded"},
                       {"deadlineMs", static_cast<std::int64_t>(ctx_.deadline.count())}});
  }

  Run& run_;
  const ExecutionContext& ctx_;
  std::set<std::string> fed_;
  std::map<std::string, std::set<std::string>> downstream_;
  std::map<std::string, std::vector<Endpoint>> fanout_;
  std::vector<std::string> failed_;

  std::stop_source stop_;
  std::vector<std::thread> workers_;
  std::size_t in_flight_ = 0;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Completion> completions_;
};

}  // namespace

Run execute_run(const RunPlan& plan, const ExecutionContext& ctx, std::string run_id) {
  if (ctx.catalog == nullptr) throw Error("invalid-context", "execution context has no module catalog");
  Run run;
  run.run_id = run_id.empty() ? new_run_id() : std::move(run_id);
  run.plan = plan;
  run.started_at = std::chrono::system_clock::now();
  for (const auto& id : plan.topological_order) run.module_states[id] = ModuleState::Pending;
  for (const auto& e : plan.flow.external_inputs) {
    run.port_values.insert_or_assign(e.target.to_string(), plan.input_bindings.at(e.name));
  }
  Coordinator coordinator(run, ctx);
  Json inputs = Json::object();
  for (const auto& [name, value] : plan.input_bindings) inputs[name] = to_json(value);
  coordinator.emit(EventKind::RunStarted, std::nullopt, Json{{"flow", plan.flow.name}, {"inputs", inputs}});
  coordinator.drive();
  return run;
}

Run resume_run(Run run, const std::string& module_id, bool approve, const ExecutionContext& ctx) {
  if (auto it = run.gate_decisions.find(module_id); it != run.gate_decisions.end()) {
    if (it->second == approve) return run;
    throw Error("wrong-state", "gate " + module_id + " was already decided");
  }
  if (run.state != RunState::PausedForApproval) {
    throw Error("wrong-state", std::string("run is ") + to_string(run.state) + ", not paused_for_approval");
  }
  if (!run.pending_gate || *run.pending_gate != module_id) {
    throw Error("unknown-gate", "run is not waiting for approval of '" + module_id + "'");
  }
  run.gate_decisions[module_id] = approve;
  run.pending_gate.reset();
  Coordinator coordinator(run, ctx);
  coordinator.emit(EventKind::GateDecided, module_id, Json{{"decision", approve ? "approve" : "reject"}});
  if (approve) {
    coordinator.drive();
  } else {
    coordinator.skip_with_downstream(module_id);
    for (auto& [id, st] : run.module_states) {
      if (st == ModuleState::Pending || st == ModuleState::Ready) st = ModuleState::Skipped;
    }
    run.state = RunState::Rejected;
    run.finished_at = std::chrono::system_clock::now();
  }
  return run;
}

}  // namespace jitflow
