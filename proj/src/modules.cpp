#include <string>

#include "jitflow/engine.hpp"
#include "jitflow/error.hpp"
#include "jitflow/script.hpp"
#include "jitflow/stdlib.hpp"
#include "jitflow/validate.hpp"

namespace jitflow {

namespace {

constexpr int kFormatterArgs = 4;
constexpr int kWebHeaders = 4;
constexpr int kScriptArgs = 4;
constexpr int kTableInputs = 4;

ParamSpec text_param(std::string name, bool required, Json def = nullptr, std::vector<std::string> choices = {}) {
  return ParamSpec{std::move(name), ParamKind::Text, required, std::move(def), std::move(choices)};
}

ParamSpec int_param(std::string name, std::int64_t def) { return ParamSpec{std::move(name), ParamKind::Int, false, def, {}}; }

InputPortSpec required_in(std::string name, PortType type) { return InputPortSpec{std::move(name), std::move(type), true, {}}; }

InputPortSpec optional_in(std::string name, PortType type) { return InputPortSpec{std::move(name), std::move(type), false, {}}; }

const Value& require_input(const ModuleCall& call, std::string_view port) {
  const auto* v = call.input(port);
  if (v == nullptr) throw Error("missing-input", "input " + std::string(port) + " has no value");
  return *v;
}

script::ScriptOptions script_options(const ModuleCall& call) {
  return script::ScriptOptions{call.ctx.interpreter, call.run_id, call.stop};
}

PortType scalar_type(const std::string& name) {
  if (name == "Int") return types::Int();
  if (name == "Real") return types::Real();
  if (name == "Bool") return types::Bool();
  if (name == "Text") return types::Text();
  throw Error("invalid-param", "unsupported scalar type '" + name + "' (expected Int, Real, Bool or Text)");
}

std::vector<PortType> arg_types(const std::string& list) {
  std::vector<PortType> out;
  std::string cur;
  auto flush = [&] {
    auto b = cur.find_first_not_of(" \t");
    auto e = cur.find_last_not_of(" \t");
    if (b == std::string::npos) throw Error("invalid-param", "ArgTypes has an empty entry");
    out.push_back(scalar_type(cur.substr(b, e - b + 1)));
    cur.clear();
  };
  if (list.find_first_not_of(" \t") == std::string::npos) return out;
  for (char c : list) {
    if (c == ',') {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

Json invocation_detail(const script::ScriptInvocation& inv) {
  return Json{{"argv", inv.argv}, {"workdir", inv.workdir}, {"exitCode", inv.exit_code}, {"stderr", inv.stderr_text}};
}

void add_external(ModuleCatalog& catalog, const std::string& kind, const PortType& type, bool is_input) {
  ModuleKind k;
  k.spec.kind = kind;
  k.spec.description = std::string(is_input ? "Flow input" : "Flow output") + " of type " + type.to_string();
  k.spec.inputs = {required_in("Input", type)};
  k.spec.outputs = {OutputPortSpec{"Result", type}};
  k.execute = [](const ModuleCall& call) {
    return ModuleResult{{{"Result", require_input(call, "Input")}}};
  };
  k.external_input = is_input;
  k.external_output = !is_input;
  catalog.add(std::move(k));
}

void add_calculator(ModuleCatalog& catalog) {
  ModuleKind k;
  k.spec.kind = "Calculator";
  k.spec.description = "Applies + - * / to two numbers; Int mode truncates division toward zero";
  k.spec.params = {text_param("Operator", false, "+", {"+", "-", "*", "/"}),
                   text_param("Mode", false, "Int", {"Int", "Real"})};
  k.spec.inputs = {required_in("Param1", types::Int()), required_in("Param2", types::Int())};
  k.spec.outputs = {OutputPortSpec{"Result", types::Int()}};
  k.resolve = [](const ModuleSpec& base, const Json& params, const ResolveEnv&) {
    auto spec = base;
    if (params.at("Mode") == "Real") {
      for (auto& in : spec.inputs) in.type = types::Real();
      spec.outputs[0].type = types::Real();
    }
    return spec;
  };
  k.execute = [](const ModuleCall& call) {
    auto mode = call.param_text("Mode") == "Real" ? stdlib::CalcMode::Real : stdlib::CalcMode::Int;
    auto result = stdlib::eval_calculator(call.param_text("Operator"), require_input(call, "Param1"),
                                          require_input(call, "Param2"), mode);
    return ModuleResult{{{"Result", result}}};
  };
  catalog.add(std::move(k));
}

void add_key_value(ModuleCatalog& catalog) {
  ModuleKind k;
  k.spec.kind = "KeyValuePair";
  k.spec.description = "Builds a key/value pair such as an HTTP header; the Value input overrides the param";
  k.spec.params = {text_param("Key", true), text_param("Value", false, "")};
  k.spec.inputs = {optional_in("Value", types::Text())};
  k.spec.outputs = {OutputPortSpec{"Result", types::KeyValue()}};
  k.execute = [](const ModuleCall& call) {
    const auto* v = call.input("Value");
    auto kv = stdlib::make_key_value(call.param_text("Key"), v ? v->as_text() : call.param_text("Value"));
    return ModuleResult{{{"Result", Value::key_value(std::move(kv))}}};
  };
  catalog.add(std::move(k));
}

void add_formatter(ModuleCatalog& catalog) {
  ModuleKind k;
  k.spec.kind = "StringFormatter";
  k.spec.description = "Fills {0}..{3} in Template from Arg inputs; {{ and }} are literal braces";
  k.spec.params = {text_param("Template", true), text_param("EscapeMode", false, "none", {"none", "json"})};
  for (int i = 0; i < kFormatterArgs; ++i) k.spec.inputs.push_back(optional_in("Arg" + std::to_string(i), types::Text()));
  k.spec.outputs = {OutputPortSpec{"Result", types::Text()}};
  k.execute = [](const ModuleCall& call) {
    std::vector<std::optional<std::string>> args(kFormatterArgs);
    for (int i = 0; i < kFormatterArgs; ++i) {
      if (const auto* v = call.input("Arg" + std::to_string(i))) args[i] = v->as_text();
    }
    auto mode = call.param_text("EscapeMode") == "json" ? stdlib::EscapeMode::Json : stdlib::EscapeMode::None;
    return ModuleResult{{{"Result", Value::text(stdlib::format_string(call.param_text("Template"), args, mode))}}};
  };
  catalog.add(std::move(k));
}

void add_web_client(ModuleCatalog& catalog) {
  ModuleKind k;
  k.spec.kind = "WebClientRobust";
  k.spec.description = "HTTP request with retries on transport failure; non-2xx statuses are returned as data";
  k.spec.params = {text_param("Uri", true),
                   text_param("Method", false, "GET", {"GET", "POST", "PUT", "PATCH", "DELETE", "HEAD"}),
                   text_param("ContentType", false, ""),
                   int_param("Retries", 3),
                   int_param("TimeoutSeconds", 60)};
  k.spec.inputs = {optional_in("Body", types::Text())};
  for (int i = 0; i < kWebHeaders; ++i) k.spec.inputs.push_back(optional_in("Header" + std::to_string(i), types::KeyValue()));
  k.spec.outputs = {OutputPortSpec{"StatusCode", types::Int()}, OutputPortSpec{"Response", types::Text()}};
  k.execute = [](const ModuleCall& call) {
    stdlib::HttpRequest req;
    req.uri = call.param_text("Uri");
    req.method = call.param_text("Method");
    req.content_type = call.param_text("ContentType");
    req.retries = static_cast<int>(call.param_int("Retries"));
    req.timeout = std::chrono::seconds(std::max<std::int64_t>(1, call.param_int("TimeoutSeconds")));
    if (const auto* body = call.input("Body")) req.body = body->as_text();
    for (int i = 0; i < kWebHeaders; ++i) {
      if (const auto* h = call.input("Header" + std::to_string(i))) req.headers.push_back(h->as_key_value());
    }
    auto ex = stdlib::http_request(req, call.stop);
    ModuleResult r;
    r.outputs = {{"StatusCode", Value::integer(ex.status)}, {"Response", Value::text(ex.body)}};
    r.detail = Json{{"method", req.method}, {"uri", req.uri}, {"status", ex.status}, {"attempts", ex.attempts}};
    return r;
  };
  catalog.add(std::move(k));
}

void add_jsonpath(ModuleCatalog& catalog) {
  ModuleKind k;
  k.spec.kind = "JSONPathQuery";
  k.spec.description = "Selects a value from a JSON document with $ .field ['field'] [n] steps";
  k.spec.params = {text_param("Path", true)};
  k.spec.inputs = {required_in("Document", types::Text())};
  k.spec.outputs = {OutputPortSpec{"Result", types::Text()}};
  k.execute = [](const ModuleCall& call) {
    auto out = stdlib::query_jsonpath(require_input(call, "Document").as_text(), call.param_text("Path"));
    return ModuleResult{{{"Result", Value::text(std::move(out))}}};
  };
  catalog.add(std::move(k));
}

void add_regex(ModuleCatalog& catalog) {
  ModuleKind k;
  k.spec.kind = "RegexReplace";
  k.spec.description = "Replaces every match of a Perl-syntax Pattern with Replacement ($1 for groups)";
  k.spec.params = {text_param("Pattern", true), text_param("Replacement", false, "")};
  k.spec.inputs = {required_in("Input", types::Text())};
  k.spec.outputs = {OutputPortSpec{"Result", types::Text()}};
  k.execute = [](const ModuleCall& call) {
    auto out = stdlib::replace_regex(require_input(call, "Input").as_text(), call.param_text("Pattern"),
                                     call.param_text("Replacement"));
    return ModuleResult{{{"Result", Value::text(std::move(out))}}};
  };
  catalog.add(std::move(k));
}

void add_code_function(ModuleCatalog& catalog) {
  ModuleKind k;
  k.spec.kind = "CodeFunction";
  k.spec.description = "Defines Code, calls FunctionName(Arg0..) and returns its value as ResultType";
  k.spec.params = {text_param("FunctionName", false, "gptFunction"), text_param("ArgTypes", false, ""),
                   text_param("ResultType", false, "Text", {"Int", "Real", "Bool", "Text"})};
  k.spec.inputs = {required_in("Code", types::Text())};
  k.spec.outputs = {OutputPortSpec{"Result", types::Text()}};
  k.resolve = [](const ModuleSpec& base, const Json& params, const ResolveEnv&) {
    auto spec = base;
    if (!is_identifier(params.at("FunctionName").get<std::string>())) {
      throw Error("invalid-param", "FunctionName must be an identifier");
    }
    auto types = arg_types(params.at("ArgTypes").get<std::string>());
    for (std::size_t i = 0; i < types.size(); ++i) spec.inputs.push_back(required_in("Arg" + std::to_string(i), types[i]));
    spec.outputs[0].type = scalar_type(params.at("ResultType").get<std::string>());
    return spec;
  };
  k.execute = [](const ModuleCall& call) {
    std::vector<Value> args;
    for (std::size_t i = 1; i < call.resolved.spec.inputs.size(); ++i) {
      args.push_back(require_input(call, call.resolved.spec.inputs[i].name));
    }
    auto run = script::run_code_function(require_input(call, "Code").as_text(), call.param_text("FunctionName"),
                                         args, call.resolved.spec.outputs[0].type, script_options(call));
    return ModuleResult{{{"Result", run.result}}, invocation_detail(run.invocation)};
  };
  catalog.add(std::move(k));
}

void add_code_script(ModuleCatalog& catalog) {
  ModuleKind k;
  k.spec.kind = "CodeScript";
  k.spec.description = "Runs Code as a script with Arg inputs on the command line; Result parses stdout as ResultType";
  k.spec.params = {text_param("ResultType", false, "Text", {"Int", "Real", "Bool", "Text"})};
  k.spec.inputs = {required_in("Code", types::Text())};
  for (int i = 0; i < kScriptArgs; ++i) k.spec.inputs.push_back(optional_in("Arg" + std::to_string(i), types::Text()));
  k.spec.outputs = {OutputPortSpec{"Stdout", types::Text()}, OutputPortSpec{"Result", types::Text()},
                    OutputPortSpec{"ExitCode", types::Int()}};
  k.resolve = [](const ModuleSpec& base, const Json& params, const ResolveEnv&) {
    auto spec = base;
    spec.outputs[1].type = scalar_type(params.at("ResultType").get<std::string>());
    return spec;
  };
  k.execute = [](const ModuleCall& call) {
    std::vector<std::string> args;
    for (int i = 0; i < kScriptArgs; ++i) {
      if (const auto* v = call.input("Arg" + std::to_string(i))) args.push_back(v->as_text());
    }
    auto inv = script::run_code_script(require_input(call, "Code").as_text(), args, script_options(call));
    if (inv.exit_code != 0) {
      throw Error("script-failed", "script exited with code " + std::to_string(inv.exit_code), inv.to_json());
    }
    auto out = script::trim_trailing_newlines(inv.stdout_text);
    Value result = Value::text(out);
    try {
      result = script::parse_result(out, call.resolved.spec.outputs[1].type);
    } catch (const Error& e) {
      throw Error(e.code(), e.what(), inv.to_json());
    }
    ModuleResult r;
    r.outputs = {{"Stdout", Value::text(out)}, {"Result", result}, {"ExitCode", Value::integer(inv.exit_code)}};
    r.detail = invocation_detail(inv);
    return r;
  };
  catalog.add(std::move(k));
}

void add_code_table(ModuleCatalog& catalog) {
  ModuleKind k;
  k.spec.kind = "CodeTable";
  k.spec.description =
      "Runs pandas Code with Table inputs as input_dfs[k]; the Result is the composable_table_out dataframe";
  k.spec.inputs = {required_in("Code", types::Text())};
  for (int i = 0; i < kTableInputs; ++i) k.spec.inputs.push_back(optional_in("Table" + std::to_string(i), types::Table()));
  k.spec.outputs = {OutputPortSpec{"Result", types::Table()}, OutputPortSpec{"Stdout", types::Text()}};
  k.execute = [](const ModuleCall& call) {
    std::vector<Table> tables;
    for (int i = 0; i < kTableInputs; ++i) {
      if (const auto* v = call.input("Table" + std::to_string(i))) tables.push_back(v->as_table());
    }
    auto run = script::run_code_table(require_input(call, "Code").as_text(), tables, script_options(call));
    ModuleResult r;
    r.outputs = {{"Result", Value::table(std::move(run.table))},
                 {"Stdout", Value::text(script::trim_trailing_newlines(run.invocation.stdout_text))}};
    r.detail = invocation_detail(run.invocation);
    return r;
  };
  catalog.add(std::move(k));
}

void add_app_reference(ModuleCatalog& catalog) {
  ModuleKind k;
  k.spec.kind = "AppReference";
  k.spec.description = "Runs a stored flow as one module; ports are the flow's external inputs and outputs";
  k.spec.params = {text_param("FlowId", true)};
  k.resolve = [](const ModuleSpec& base, const Json& params, const ResolveEnv& env) {
    const auto id = params.at("FlowId").get<std::string>();
    auto inner = resolve_app_reference(id, env.flows, env.depth + 1);
    auto iface = flow_interface(inner, *env.catalog, env.flows, env.depth + 1);
    auto spec = base;
    for (const auto& p : iface.inputs) {
      if (!is_identifier(p.name)) {
        throw Error("invalid-reference", "flow '" + id + "' input name '" + p.name + "' is not a port identifier");
      }
      spec.inputs.push_back(required_in(p.name, p.type));
    }
    for (const auto& p : iface.outputs) {
      if (!is_identifier(p.name)) {
        throw Error("invalid-reference", "flow '" + id + "' output name '" + p.name + "' is not a port identifier");
      }
      spec.outputs.push_back(OutputPortSpec{p.name, p.type});
    }
    return spec;
  };
  k.execute = [](const ModuleCall& call) {
    const auto id = call.param_text("FlowId");
    auto inner_flow = resolve_app_reference(id, call.ctx.flows, call.depth + 1);
    auto plan = plan_run(inner_flow, *call.ctx.catalog, call.inputs, call.ctx.flows, call.depth + 1);
    ExecutionContext inner_ctx = call.ctx;
    inner_ctx.gate_policy = GatePolicy::Off;
    inner_ctx.on_event = nullptr;
    auto run = execute_run(plan, inner_ctx, call.run_id);

    Json modules = Json::object();
    for (const auto& [mid, st] : run.module_states) modules[mid] = to_string(st);
    Json detail{{"flowId", id}, {"state", to_string(run.state)}, {"modules", modules}};
    if (run.state != RunState::Completed) {
      std::string reason = "referenced flow '" + id + "' did not complete";
      for (const auto& e : run.trace) {
        if (e.event == EventKind::ModuleFailed && e.detail.contains("message")) {
          reason += ": " + *e.module_id + ": " + e.detail["message"].get<std::string>();
          detail["failure"] = e.detail;
          break;
        }
        if (e.event == EventKind::RunFailed && e.detail.contains("reason")) {
          reason += ": " + e.detail["reason"].get<std::string>();
        }
      }
      throw Error("reference-failed", reason, detail);
    }
    return ModuleResult{run.outputs, detail};
  };
  catalog.add(std::move(k));
}

}  // namespace

void register_standard_modules(ModuleCatalog& catalog) {
  add_external(catalog, "ExternalIntInput", types::Int(), true);
  add_external(catalog, "ExternalRealInput", types::Real(), true);
  add_external(catalog, "ExternalStringInput", types::Text(), true);
  add_external(catalog, "ExternalTableInput", types::Table(), true);
  add_external(catalog, "ExternalIntOutput", types::Int(), false);
  add_external(catalog, "ExternalRealOutput", types::Real(), false);
  add_external(catalog, "ExternalStringOutput", types::Text(), false);
  add_external(catalog, "ExternalTableOutput", types::Table(), false);
  add_calculator(catalog);
  add_key_value(catalog);
  add_formatter(catalog);
  add_web_client(catalog);
  add_jsonpath(catalog);
  add_regex(catalog);
  add_code_function(catalog);
  add_code_script(catalog);
  add_code_table(catalog);
  add_app_reference(catalog);
}

ModuleCatalog standard_catalog() {
  ModuleCatalog catalog;
  register_standard_modules(catalog);
  return catalog;
}

}  // namespace jitflow
