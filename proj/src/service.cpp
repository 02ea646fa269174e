#include "jitflow/service.hpp"

#include <condition_variable>

#include <httplib.h>

#include "jitflow/dsl.hpp"
#include "jitflow/error.hpp"
#include "jitflow/jit.hpp"
#include "jitflow/validate.hpp"

namespace jitflow {

struct ActiveRun {
  std::string run_id;
  std::mutex mutex;
  std::condition_variable cv;
  RunRecord record;
  Run run;
  ExecutionContext ctx;
  bool busy = false;
  bool terminal = false;
  std::vector<std::string> events;
  std::thread worker;
};

namespace {

using httplib::Request;
using httplib::Response;

void send_json(Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(Response& res, int status, const std::string& code, const std::string& message,
                const Json& detail = Json::object()) {
  Json err{{"code", code}, {"message", message}};
  if (!detail.empty()) err["detail"] = detail;
  send_json(res, status, Json{{"error", err}});
}

Json parse_body(const Request& req) {
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw Error("malformed", std::string("request body is not JSON: ") + e.what());
  }
}

FlowDefinition flow_from_body(const std::string& body) {
  auto first = body.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && body[first] != '{') {
    auto parsed = parse_dsl(DslSource{body, SourceOrigin::User});
    if (!parsed.ok()) throw Error("malformed", "flow DSL: " + parsed.diagnostics.front().to_string());
    return *parsed.flow;
  }
  try {
    return parse_flow_document(body);
  } catch (const Error& e) {
    throw Error("malformed", e.what(), e.detail());
  }
}

const std::filesystem::path& require_data_dir(const Runtime& runtime) {
  if (!runtime.config().data_dir) throw Error("config", "the service needs a data directory");
  return *runtime.config().data_dir;
}

void apply_terminal(RunRecord& record, const TraceEvent& e) {
  switch (e.event) {
    case EventKind::RunPaused:
      record.state = RunState::PausedForApproval;
      record.pending_gate = e.module_id;
      break;
    case EventKind::GateDecided:
      record.pending_gate.reset();
      if (e.detail.value("decision", "") == "reject") {
        record.state = RunState::Rejected;
        record.finished_at = iso8601(std::chrono::system_clock::now());
      } else {
        record.state = RunState::Running;
      }
      break;
    case EventKind::RunCompleted:
      record.state = RunState::Completed;
      record.outputs = e.detail.value("outputs", Json::object());
      record.finished_at = iso8601(std::chrono::system_clock::now());
      break;
    case EventKind::RunFailed:
      record.state = RunState::Failed;
      record.pending_gate.reset();
      record.error = e.detail;
      record.finished_at = iso8601(std::chrono::system_clock::now());
      break;
    default:
      break;
  }
}

bool changes_status(EventKind k) {
  return k == EventKind::RunPaused || k == EventKind::GateDecided || k == EventKind::RunCompleted ||
         k == EventKind::RunFailed;
}

}  // namespace

Service::Service(Runtime& runtime, ServiceConfig config)
    : runtime_(runtime),
      config_(std::move(config)),
      runs_store_(require_data_dir(runtime)),
      server_(std::make_unique<httplib::Server>()) {
  recover_interrupted_runs();
  routes();
}

Service::~Service() {
  stop();
  std::map<std::string, std::shared_ptr<ActiveRun>> runs;
  {
    std::lock_guard lock(runs_mutex_);
    runs = runs_;
  }
  for (auto& [_, r] : runs) {
    if (r->worker.joinable()) r->worker.join();
  }
}

void Service::recover_interrupted_runs() {
  for (const auto& id : runs_store_.run_ids()) {
    auto record = runs_store_.load(id);
    if (!record || record->state == RunState::Completed || record->state == RunState::Failed ||
        record->state == RunState::Rejected) {
      continue;
    }
    TraceEvent e;
    e.event = EventKind::RunFailed;
    e.detail = Json{{"reason", "service restarted before the run finished"}, {"failedModules", Json::array()}};
    auto lines = runs_store_.trace_lines(id);
    if (!lines.empty()) e.ts = Json::parse(lines.back()).value("ts", std::int64_t{0});
    runs_store_.append_event(id, e);
    apply_terminal(*record, e);
    runs_store_.write_status(*record);
  }
}

int Service::start() {
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.bind);
    if (port_ < 0) throw Error("bind", "cannot bind a port on " + config_.bind);
  } else {
    if (!server_->bind_to_port(config_.bind, config_.port)) {
      throw Error("bind", "cannot bind " + config_.bind + ":" + std::to_string(config_.port));
    }
    port_ = config_.port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void Service::wait() {
  if (thread_.joinable()) thread_.join();
}

void Service::stop() {
  stopping_ = true;
  {
    std::lock_guard lock(runs_mutex_);
    for (auto& [_, r] : runs_) r->cv.notify_all();
  }
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::shared_ptr<ActiveRun> Service::active(const std::string& run_id) {
  std::lock_guard lock(runs_mutex_);
  auto it = runs_.find(run_id);
  return it == runs_.end() ? nullptr : it->second;
}

void Service::launch(const std::shared_ptr<ActiveRun>& run, std::function<Run()> body) {
  if (run->worker.joinable()) run->worker.join();
  run->busy = true;
  run->worker = std::thread([this, run, body = std::move(body)] {
    Run result;
    try {
      result = body();
    } catch (const std::exception& e) {
      // Planning already succeeded, so this is an internal failure.
      std::lock_guard lock(run->mutex);
      run->record.state = RunState::Failed;
      run->record.error = Json{{"reason", e.what()}};
      runs_store_.write_status(run->record);
      run->terminal = true;
      run->busy = false;
      run->cv.notify_all();
      return;
    }
    std::lock_guard lock(run->mutex);
    run->run = std::move(result);
    run->busy = false;
    run->cv.notify_all();
  });
}

void Service::routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  s.set_exception_handler([](const Request&, Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, e.code() == "malformed" ? 400 : 500, e.code(), e.what(), e.detail());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });
  if (config_.static_dir && std::filesystem::is_directory(*config_.static_dir)) {
    s.set_mount_point("/", config_.static_dir->string());
  }

  s.Get("/api/v1/catalog", [this](const Request&, Response& res) {
    send_json(res, 200, runtime_.catalog().to_json());
  });

  s.Get("/api/v1/flows", [this](const Request&, Response& res) {
    send_json(res, 200, Json{{"ids", runtime_.flows().ids()}});
  });

  s.Post("/api/v1/flows/validate", [this](const Request& req, Response& res) {
    auto flow = flow_from_body(req.body);
    send_json(res, 200, validate_flow(flow, runtime_.catalog(), &runtime_.flows()).to_json());
  });

  s.Post("/api/v1/flows", [this](const Request& req, Response& res) {
    auto flow = flow_from_body(req.body);
    std::optional<std::string> id;
    if (req.has_param("id")) id = req.get_param_value("id");
    try {
      auto stored = runtime_.flows().put(flow, id);
      send_json(res, 201, Json{{"id", stored}});
    } catch (const Error& e) {
      send_error(res, 400, e.code(), e.what());
    }
  });

  s.Get(R"(/api/v1/flows/([A-Za-z0-9_-]+))", [this](const Request& req, Response& res) {
    auto flow = runtime_.flows().find_flow(req.matches[1].str());
    if (!flow) return send_error(res, 404, "unknown-flow", "no flow with id " + req.matches[1].str());
    if (req.has_param("format") && req.get_param_value("format") == "dsl") {
      res.set_content(render_dsl(*flow), "text/plain; charset=utf-8");
      return;
    }
    res.set_content(serialize_flow(*flow), "application/json");
  });

  s.Post("/api/v1/runs", [this](const Request& req, Response& res) {
    auto body = parse_body(req);
    if (!body.is_object()) return send_error(res, 400, "malformed", "body must be a JSON object");
    std::string flow_id;
    FlowDefinition flow;
    if (body.contains("flow")) {
      try {
        flow = flow_from_json(body["flow"]);
      } catch (const Error& e) {
        return send_error(res, 400, "malformed", e.what());
      }
      flow_id = runtime_.flows().put(flow);
    } else {
      if (!body.contains("flowId") || !body["flowId"].is_string()) {
        return send_error(res, 400, "malformed", "flowId is required");
      }
      flow_id = body["flowId"].get<std::string>();
      auto found = runtime_.flows().find_flow(flow_id);
      if (!found) return send_error(res, 404, "unknown-flow", "no flow with id " + flow_id);
      flow = *found;
    }
    const Json inputs_json = body.value("inputs", Json::object());
    bool require = config_.require_approval_default;
    if (body.contains("options") && body["options"].is_object()) {
      require = body["options"].value("requireApproval", require);
    }

    RunPlan plan;
    try {
      auto inputs = bind_json_inputs(flow, runtime_.catalog(), inputs_json, &runtime_.flows());
      plan = plan_run(flow, runtime_.catalog(), inputs, &runtime_.flows());
    } catch (const Error& e) {
      Json detail = e.detail();
      if (e.code() == "invalid-flow" || e.code() == "invalid-reference") {
        detail = validate_flow(flow, runtime_.catalog(), &runtime_.flows()).to_json();
      }
      return send_error(res, 400, e.code(), e.what(), detail);
    }

    auto run = std::make_shared<ActiveRun>();
    run->run_id = new_run_id();
    run->record.run_id = run->run_id;
    run->record.flow_id = flow_id;
    run->record.started_at = iso8601(std::chrono::system_clock::now());
    run->ctx = runtime_.context(require ? GatePolicy::Require : GatePolicy::Off);
    run->ctx.on_event = [this, run = std::weak_ptr<ActiveRun>(run)](const TraceEvent& e) {
      auto r = run.lock();
      if (!r) return;
      runs_store_.append_event(r->run_id, e);
      std::lock_guard lock(r->mutex);
      if (changes_status(e.event)) {
        apply_terminal(r->record, e);
        runs_store_.write_status(r->record);
      }
      r->events.push_back(e.to_json_line());
      if (e.is_terminal()) r->terminal = true;
      r->cv.notify_all();
    };
    runs_store_.create(run->record, inputs_json);
    {
      std::lock_guard lock(runs_mutex_);
      runs_.emplace(run->run_id, run);
    }
    {
      std::lock_guard lock(run->mutex);
      launch(run, [run, plan = std::move(plan)] { return execute_run(plan, run->ctx, run->run_id); });
    }
    send_json(res, 202, Json{{"runId", run->run_id}});
  });

  s.Get("/api/v1/runs", [this](const Request&, Response& res) {
    Json out = Json::array();
    for (const auto& id : runs_store_.run_ids()) {
      if (auto r = runs_store_.load(id)) out.push_back(r->to_json());
    }
    send_json(res, 200, out);
  });

  s.Get(R"(/api/v1/runs/([0-9a-f]+))", [this](const Request& req, Response& res) {
    const auto id = req.matches[1].str();
    if (auto r = active(id)) {
      std::lock_guard lock(r->mutex);
      return send_json(res, 200, r->record.to_json());
    }
    auto record = runs_store_.load(id);
    if (!record) return send_error(res, 404, "unknown-run", "no run with id " + id);
    send_json(res, 200, record->to_json());
  });

  s.Get(R"(/api/v1/runs/([0-9a-f]+)/trace)", [this](const Request& req, Response& res) {
    const auto id = req.matches[1].str();
    if (!runs_store_.load(id)) return send_error(res, 404, "unknown-run", "no run with id " + id);
    std::string body;
    for (const auto& line : runs_store_.trace_lines(id)) body += line + "\n";
    res.set_content(body, "application/x-ndjson");
  });

  s.Post(R"(/api/v1/runs/([0-9a-f]+)/approval)", [this](const Request& req, Response& res) {
    const auto id = req.matches[1].str();
    auto body = parse_body(req);
    if (!body.is_object() || !body.contains("moduleId") || !body["moduleId"].is_string() ||
        !body.contains("decision") || !body["decision"].is_string()) {
      return send_error(res, 400, "malformed", "body must be {\"moduleId\", \"decision\"}");
    }
    const auto module_id = body["moduleId"].get<std::string>();
    const auto decision = body["decision"].get<std::string>();
    if (decision != "approve" && decision != "reject") {
      return send_error(res, 400, "malformed", "decision must be approve or reject");
    }
    const bool approve = decision == "approve";
    auto run = active(id);
    if (!run) {
      if (!runs_store_.load(id)) return send_error(res, 404, "unknown-run", "no run with id " + id);
      return send_error(res, 409, "wrong-state", "run " + id + " is not awaiting approval");
    }
    std::unique_lock lock(run->mutex);
    // The paused event is emitted slightly before the worker hands the run back.
    run->cv.wait_for(lock, std::chrono::seconds(10),
                     [&] { return !(run->busy && run->record.state == RunState::PausedForApproval); });
    if (auto it = run->run.gate_decisions.find(module_id); it != run->run.gate_decisions.end()) {
      if (it->second == approve) return send_json(res, 200, run->record.to_json());
      return send_error(res, 409, "wrong-state", "gate " + module_id + " was already decided");
    }
    if (run->busy || run->record.state != RunState::PausedForApproval) {
      return send_error(res, 409, "wrong-state",
                        std::string("run is ") + to_string(run->record.state) + ", not paused_for_approval");
    }
    if (!run->record.pending_gate || *run->record.pending_gate != module_id) {
      return send_error(res, 409, "unknown-gate", "run is not waiting for approval of '" + module_id + "'");
    }
    auto snapshot = run->run;
    run->run.gate_decisions[module_id] = approve;
    launch(run, [run, snapshot = std::move(snapshot), module_id, approve]() mutable {
      return resume_run(std::move(snapshot), module_id, approve, run->ctx);
    });
    send_json(res, 200, Json{{"runId", id}, {"moduleId", module_id}, {"decision", decision}});
  });

  s.Get(R"(/api/v1/runs/([0-9a-f]+)/events)", [this](const Request& req, Response& res) {
    const auto id = req.matches[1].str();
    auto run = active(id);
    if (!run) {
      if (!runs_store_.load(id)) return send_error(res, 404, "unknown-run", "no run with id " + id);
      std::string body;
      for (const auto& line : runs_store_.trace_lines(id)) body += "data: " + line + "\n\n";
      res.set_header("Cache-Control", "no-cache");
      res.set_content(body, "text/event-stream");
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [this, run, next = std::size_t{0}](std::size_t, httplib::DataSink& sink) mutable {
          std::vector<std::string> batch;
          bool done = false;
          {
            std::unique_lock lock(run->mutex);
            run->cv.wait_for(lock, std::chrono::milliseconds(250),
                             [&] { return next < run->events.size() || stopping_.load(); });
            batch.assign(run->events.begin() + static_cast<std::ptrdiff_t>(next), run->events.end());
            next = run->events.size();
            done = run->terminal || stopping_.load();
          }
          for (const auto& line : batch) {
            auto frame = "data: " + line + "\n\n";
            if (!sink.write(frame.data(), frame.size())) return false;
          }
          if (done) sink.done();
          return true;
        });
  });

  s.Post("/api/v1/jit/codegen", [this](const Request& req, Response& res) {
    auto body = parse_body(req);
    auto prompt = body.is_object() ? body.value("prompt", std::string()) : std::string();
    if (prompt.empty()) return send_error(res, 400, "malformed", "prompt must be a non-empty string");
    try {
      auto result = jit::generate_code(prompt, runtime_.gateway());
      send_json(res, 200, result.to_json());
    } catch (const Error& e) {
      send_error(res, 502, e.code(), e.what(), e.detail());
    }
  });

  s.Post("/api/v1/jit/synthesize", [this](const Request& req, Response& res) {
    auto body = parse_body(req);
    auto prompt = body.is_object() ? body.value("prompt", std::string()) : std::string();
    if (prompt.empty()) return send_error(res, 400, "malformed", "prompt must be a non-empty string");
    int max_attempts = body.value("maxAttempts", 3);
    try {
      auto result = jit::synthesize_flow(prompt, runtime_.catalog(), runtime_.gateway(), max_attempts,
                                         &runtime_.flows());
      auto out = result.to_json();
      if (result.flow) out["dsl"] = render_dsl(*result.flow);
      send_json(res, 200, out);
    } catch (const Error& e) {
      send_error(res, 502, e.code(), e.what(), e.detail());
    }
  });
}

}  // namespace jitflow
