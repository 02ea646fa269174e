#include "jitflow/cli.hpp"

#include <csignal>
#include <thread>

#include <CLI11.hpp>

#include "jitflow/csv.hpp"
#include "jitflow/dsl.hpp"
#include "jitflow/error.hpp"
#include "jitflow/jit.hpp"
#include "jitflow/runtime.hpp"
#include "jitflow/service.hpp"
#include "jitflow/validate.hpp"

namespace jitflow {

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void wait_for_signal() {
  g_interrupted = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

Json error_json(const Error& e) {
  Json err{{"code", e.code()}, {"message", e.what()}};
  if (!e.detail().empty()) err["detail"] = e.detail();
  return Json{{"error", err}};
}

struct GlobalOptions {
  std::string provider;
  std::string cassette;
  std::string interpreter;
  std::vector<std::string> preload;
  std::string data_dir;
};

RuntimeConfig runtime_config(const GlobalOptions& g) {
  auto cfg = RuntimeConfig::from_env();
  if (!g.provider.empty()) cfg.llm.provider = g.provider;
  if (!g.cassette.empty()) cfg.llm.cassette_path = g.cassette;
  if (!g.interpreter.empty()) cfg.interpreter.command = g.interpreter;
  if (!g.preload.empty()) cfg.interpreter.preload = g.preload;
  if (!g.data_dir.empty()) cfg.data_dir = g.data_dir;
  return cfg;
}

std::map<std::string, Value> bind_cli_inputs(const FlowDefinition& flow, const Runtime& rt,
                                             const std::vector<std::string>& assignments) {
  auto iface = flow_interface(flow, rt.catalog(), &rt.flows(), 0);
  std::map<std::string, Value> out;
  for (const auto& a : assignments) {
    auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw Error("usage", "--input expects name=value, got '" + a + "'");
    auto name = a.substr(0, eq);
    auto literal = a.substr(eq + 1);
    auto it = std::find_if(iface.inputs.begin(), iface.inputs.end(), [&](const TypedPort& p) { return p.name == name; });
    if (it == iface.inputs.end()) {
      throw Error("unknown-input", "flow '" + flow.name + "' has no external input '" + name + "'");
    }
    try {
      if (it->type == types::Table() && !literal.empty() && literal.front() == '@') {
        out.insert_or_assign(name, Value::table(csv::read_table(read_file(literal.substr(1)))));
        continue;
      }
      auto j = parse_input_literal(literal);
      if (it->type == types::Text() && !j.is_string()) j = literal;
      if (it->type.tag() == TypeTag::Json) {
        auto doc = Json::parse(literal, nullptr, false);
        j = doc.is_discarded() ? Json(literal) : doc;
      }
      out.insert_or_assign(name, value_from_json(j, it->type));
    } catch (const Error& e) {
      if (e.code() == "io" || e.code() == "csv-parse") throw;
      throw Error("type-mismatch", "external input '" + name + "' expects " + it->type.to_string() + ": " + e.what());
    }
  }
  return out;
}

int cmd_validate(const std::string& file, bool json, Runtime& rt, std::ostream& out) {
  auto flow = load_flow_file(file);
  auto report = validate_flow(flow, rt.catalog(), &rt.flows());
  if (json) {
    out << report.to_json().dump() << "\n";
  } else if (report.ok) {
    out << "ok: flow '" << flow.name << "' is valid\n";
  } else {
    out << report.to_text();
  }
  return report.ok ? 0 : 1;
}

int cmd_run(const std::string& file, const std::vector<std::string>& inputs, bool require_approval, bool yes,
            bool json, const std::string& trace_path, Runtime& rt, std::ostream& out, std::ostream& err,
            std::istream& in) {
  auto flow = load_flow_file(file);
  auto bound = bind_cli_inputs(flow, rt, inputs);
  auto plan = plan_run(flow, rt.catalog(), bound, &rt.flows());
  auto ctx = rt.context(require_approval ? GatePolicy::Require : GatePolicy::Off);
  auto run = execute_run(plan, ctx);
  while (run.state == RunState::PausedForApproval) {
    const auto gate = *run.pending_gate;
    bool approve = yes;
    if (!yes) {
      const auto& paused = run.trace.back();
      err << "gate " << gate << " (" << paused.detail.value("kind", "") << ") awaits approval; inputs:\n"
          << paused.detail.value("inputs", Json::object()).dump(2) << "\napprove? [y/N] " << std::flush;
      std::string answer;
      std::getline(in, answer);
      approve = !answer.empty() && (answer[0] == 'y' || answer[0] == 'Y');
    }
    run = resume_run(std::move(run), gate, approve, ctx);
  }
  if (!trace_path.empty()) {
    std::string lines;
    for (const auto& e : run.trace) lines += e.to_json_line() + "\n";
    write_file_atomic(trace_path, lines);
  }
  Json outputs = Json::object();
  for (const auto& [name, value] : run.outputs) outputs[name] = to_json(value);
  if (run.state == RunState::Completed) {
    if (json) {
      out << Json{{"runId", run.run_id}, {"state", to_string(run.state)}, {"outputs", outputs}}.dump() << "\n";
    } else {
      out << outputs.dump() << "\n";
    }
    return 0;
  }
  Json detail{{"runId", run.run_id}, {"state", to_string(run.state)}};
  for (const auto& e : run.trace) {
    if (e.event == EventKind::ModuleFailed) {
      detail["failures"][*e.module_id] = e.detail;
    } else if (e.event == EventKind::RunFailed) {
      detail["reason"] = e.detail.value("reason", "");
    }
  }
  const std::string code = run.state == RunState::Rejected ? "rejected" : "run-failed";
  err << error_json(Error(code, "run " + run.run_id + " ended " + to_string(run.state), detail)).dump() << "\n";
  return 1;
}

int cmd_codegen(const std::string& prompt, bool json, Runtime& rt, std::ostream& out) {
  auto result = jit::generate_code(prompt, rt.gateway());
  if (json) {
    out << result.to_json().dump() << "\n";
  } else {
    out << result.code << "\n";
  }
  return 0;
}

int cmd_synth(const std::string& prompt, const std::string& output, int max_attempts, bool json, Runtime& rt,
              std::ostream& out) {
  auto result = jit::synthesize_flow(prompt, rt.catalog(), rt.gateway(), max_attempts, &rt.flows());
  if (result.flow && !output.empty()) save_flow_file(output, *result.flow);
  if (json) {
    out << result.to_json().dump() << "\n";
  } else if (result.flow) {
    out << "ok after " << result.attempt_count() << " attempt(s)\n";
    if (output.empty()) out << render_dsl(*result.flow);
  } else {
    out << "no valid flow after " << result.attempt_count() << " attempt(s)\n" << result.report.to_text();
  }
  return result.flow ? 0 : 1;
}

int cmd_convert(const std::string& input, const std::string& output) {
  save_flow_file(output, load_flow_file(input));
  return 0;
}

int cmd_catalog(bool json, const Runtime& rt, std::ostream& out) {
  if (json) {
    out << rt.catalog().to_json().dump() << "\n";
  } else {
    out << rt.catalog().summary();
  }
  return 0;
}

}  // namespace

Json parse_input_literal(const std::string& text) {
  auto j = Json::parse(text, nullptr, false);
  if (j.is_discarded() || j.is_object() || j.is_array() || j.is_null()) return Json(text);
  return j;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in) {
  CLI::App app{"Typed flow engine with just-in-time code generation and flow synthesis", "jitflow"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--provider", g.provider, "LLM provider: openai-compat, mock or replay")->check(
      CLI::IsMember({"openai-compat", "mock", "replay"}));
  app.add_option("--cassette", g.cassette, "Cassette file for the mock provider");
  app.add_option("--interpreter", g.interpreter, "Command that runs generated scripts");
  app.add_option("--preload", g.preload, "Modules a warm interpreter imports once and forks per script")
      ->delimiter(',');

  bool json = false;
  std::string file, second, prompt, trace_path, cassette, bind = "127.0.0.1", static_dir;
  std::vector<std::string> inputs;
  bool require_approval = false, yes = false, no_approval_default = false;
  int max_attempts = 3, port = 8080;

  auto* validate = app.add_subcommand("validate", "Type-check a flow file");
  validate->add_option("file", file, "Flow file (.flow or .flow.json)")->required();
  validate->add_flag("--json", json, "Print the report as JSON");

  auto* run = app.add_subcommand("run", "Execute a flow and print its outputs as JSON");
  run->add_option("file", file, "Flow file (.flow or .flow.json)")->required();
  run->add_option("--input,-i", inputs, "name=value (JSON scalar or text; @file.csv for tables)");
  run->add_flag("--require-approval", require_approval, "Pause at gated modules");
  run->add_flag("--yes,-y", yes, "Approve every gate without asking");
  run->add_flag("--json", json, "Print run id, state and outputs");
  run->add_option("--trace", trace_path, "Write the trace as JSON Lines");

  auto* codegen = app.add_subcommand("codegen", "Generate code from a prompt and print it");
  codegen->add_option("prompt", prompt, "Natural-language request")->required();
  codegen->add_flag("--json", json, "Print prompt, raw response, code and status");

  auto* synth = app.add_subcommand("synth", "Synthesize a flow from a prompt");
  synth->add_option("prompt", prompt, "Natural-language request")->required();
  synth->add_option("-o,--output", second, "Write the flow here (.flow or .flow.json)");
  synth->add_option("--max-attempts", max_attempts, "Repair attempts")->check(CLI::Range(1, 10));
  synth->add_flag("--json", json, "Print the full synthesis result");

  auto* convert = app.add_subcommand("convert", "Convert between .flow and .flow.json");
  convert->add_option("input", file, "Source file")->required();
  convert->add_option("output", second, "Destination file")->required();

  auto* catalog = app.add_subcommand("catalog", "List module kinds");
  catalog->add_flag("--json", json, "Print specs as JSON");

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--port", port, "Port (0 picks one)");
  serve->add_option("--data-dir", g.data_dir, "Directory for stored flows and runs");
  serve->add_option("--bind", bind, "Address to bind");
  serve->add_option("--static", static_dir, "Directory served at /");
  serve->add_flag("--no-approval-default", no_approval_default, "Runs skip gates unless they ask for approval");

  auto* serve_mock = app.add_subcommand("serve-mock", "Serve a cassette as a chat completions endpoint");
  serve_mock->add_option("--cassette", cassette, "Cassette file")->required();
  serve_mock->add_option("--port", port, "Port (0 picks one)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (convert->parsed()) return cmd_convert(file, second);
    if (!serve->parsed() && !serve_mock->parsed()) {
      Runtime rt(runtime_config(g));
      if (validate->parsed()) return cmd_validate(file, json, rt, out);
      if (run->parsed()) return cmd_run(file, inputs, require_approval, yes, json, trace_path, rt, out, err, in);
      if (catalog->parsed()) return cmd_catalog(json, rt, out);
      if (codegen->parsed()) return cmd_codegen(prompt, json, rt, out);
      return cmd_synth(prompt, second, max_attempts, json, rt, out);
    }
    if (serve->parsed()) {
      auto cfg = runtime_config(g);
      if (!cfg.data_dir) cfg.data_dir = "jitflow-data";
      Runtime rt(cfg);
      ServiceConfig sc;
      sc.bind = bind;
      sc.port = port;
      if (!static_dir.empty()) sc.static_dir = static_dir;
      sc.require_approval_default = !no_approval_default;
      Service service(rt, sc);
      int bound = service.start();
      out << "serving http://" << bind << ":" << bound << "/api/v1 (data in " << cfg.data_dir->string() << ")"
          << std::endl;
      wait_for_signal();
      service.stop();
      return 0;
    }
    if (serve_mock->parsed()) {
      auto server = llm::serve_mock(llm::Cassette::load(cassette), port);
      out << "mock chat completions at " << server->base_url() << "/v1/chat/completions" << std::endl;
      wait_for_signal();
      server->stop();
      return 0;
    }
  } catch (const Error& e) {
    err << error_json(e).dump() << "\n";
    return e.code() == "usage" ? 2 : 1;
  } catch (const std::exception& e) {
    err << error_json(Error("internal", e.what())).dump() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace jitflow
