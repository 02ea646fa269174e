#include <gtest/gtest.h>

#include <mutex>

#include "jitflow/dsl.hpp"
#include "jitflow/engine.hpp"
#include "jitflow/error.hpp"
#include "jitflow/stdlib.hpp"
#include "jitflow/store.hpp"
#include "support.hpp"

using namespace jitflow;
using namespace std::chrono_literals;

namespace {

const ModuleCatalog& catalog() {
  static const ModuleCatalog c = standard_catalog();
  return c;
}

FlowDefinition dsl(const std::string& text) {
  auto r = parse_dsl(text);
  if (!r.ok()) throw std::runtime_error(r.diagnostics.front().to_string());
  return *r.flow;
}

ExecutionContext context(GatePolicy gates = GatePolicy::Off, const FlowResolver* flows = nullptr) {
  ExecutionContext ctx;
  ctx.catalog = &catalog();
  ctx.flows = flows;
  ctx.gate_policy = gates;
  return ctx;
}

std::map<std::string, Value> ints(std::initializer_list<std::pair<const char*, std::int64_t>> l) {
  std::map<std::string, Value> m;
  for (auto [k, v] : l) m.emplace(k, Value::integer(v));
  return m;
}

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

std::vector<std::string> started(const Run& run) {
  std::vector<std::string> ids;
  for (const auto& e : run.trace) {
    if (e.event == EventKind::ModuleStarted) ids.push_back(*e.module_id);
  }
  return ids;
}

const char* kScriptFlow = R"(flow "script" {
  module code: ExternalStringInput
  module s: CodeScript gated
  module x: ExternalIntInput
  module after: Calculator
  module o: ExternalStringOutput
  module r: ExternalIntOutput
  connect code.Result -> s.Code
  connect x.Result -> s.Arg0
  connect s.Stdout -> o.Input
  connect s.ExitCode -> after.Param1
  connect x.Result -> after.Param2
  connect after.Result -> r.Input
  extern input code.Input as "code"
  extern input x.Input as "x"
  extern output o.Result as "stdout"
  extern output r.Result as "r"
})";

}  // namespace

TEST(Engine, RunsAddFlow) {
  auto plan = plan_run(testkit::fixture_flow("add.flow"), catalog(), ints({{"x", 3}, {"y", 4}}));
  auto run = execute_run(plan, context());
  EXPECT_EQ(run.state, RunState::Completed);
  EXPECT_EQ(run.outputs.at("sum"), Value::integer(7));
  ASSERT_GE(run.trace.size(), 2u);
  EXPECT_EQ(run.trace.front().event, EventKind::RunStarted);
  EXPECT_EQ(run.trace.back().event, EventKind::RunCompleted);
  for (std::size_t i = 1; i < run.trace.size(); ++i) EXPECT_LE(run.trace[i - 1].ts, run.trace[i].ts);
  EXPECT_TRUE(run.finished_at.has_value());
}

TEST(Engine, TraceLinesRoundTrip) {
  auto run = execute_run(plan_run(testkit::fixture_flow("add.flow"), catalog(), ints({{"x", 1}, {"y", 2}})), context());
  for (const auto& e : run.trace) {
    auto line = e.to_json_line();
    EXPECT_EQ(line.find('\n'), std::string::npos);
    auto back = TraceEvent::from_json(Json::parse(line));
    EXPECT_EQ(back.to_json_line(), line);
  }
  const auto first = run.trace.front().to_json_line();
  EXPECT_EQ(first.rfind("{\"ts\":", 0), 0u);
}

TEST(Engine, InputBindingErrors) {
  auto add = testkit::fixture_flow("add.flow");
  EXPECT_EQ(code_of([&] { plan_run(add, catalog(), ints({{"x", 1}})); }), "missing-input");
  EXPECT_EQ(code_of([&] {
              plan_run(add, catalog(), {{"x", Value::integer(1)}, {"y", Value::text("2")}});
            }),
            "type-mismatch");
  EXPECT_EQ(code_of([&] { plan_run(add, catalog(), ints({{"x", 1}, {"y", 2}, {"z", 3}})); }), "unknown-input");
  EXPECT_EQ(code_of([&] { plan_run(testkit::fixture_flow("invalid/cycle.flow"), catalog(), ints({{"x", 1}})); }),
            "invalid-flow");
}

TEST(Engine, BindJsonInputsUsesDeclaredTypes) {
  auto add = testkit::fixture_flow("add.flow");
  auto bound = bind_json_inputs(add, catalog(), Json{{"x", 2}, {"y", 3}});
  EXPECT_EQ(bound.at("x"), Value::integer(2));
  EXPECT_THROW(bind_json_inputs(add, catalog(), Json{{"x", "two"}, {"y", 3}}), Error);
}

TEST(Engine, ModuleFailureSkipsDownstreamOnly) {
  auto f = dsl(R"(flow "div" {
    module x: ExternalIntInput
    module z: ExternalIntInput
    module d: Calculator { Operator = "/" }
    module a: Calculator
    module after: Calculator
    module o1: ExternalIntOutput
    module o2: ExternalIntOutput
    connect x.Result -> d.Param1
    connect z.Result -> d.Param2
    connect d.Result -> after.Param1
    connect x.Result -> after.Param2
    connect after.Result -> o1.Input
    connect x.Result -> a.Param1
    connect x.Result -> a.Param2
    connect a.Result -> o2.Input
    extern input x.Input as "x"
    extern input z.Input as "z"
    extern output o1.Result as "q"
    extern output o2.Result as "double"
  })");
  auto run = execute_run(plan_run(f, catalog(), ints({{"x", 5}, {"z", 0}})), context());
  EXPECT_EQ(run.state, RunState::Failed);
  EXPECT_EQ(run.module_states.at("d"), ModuleState::Failed);
  EXPECT_EQ(run.module_states.at("after"), ModuleState::Skipped);
  EXPECT_EQ(run.module_states.at("a"), ModuleState::Done);
  const auto& failed = run.trace.back();
  EXPECT_EQ(failed.event, EventKind::RunFailed);
  EXPECT_EQ(failed.detail["failedModules"], Json::array({"d"}));
  bool saw = false;
  for (const auto& e : run.trace) {
    if (e.event == EventKind::ModuleFailed) {
      saw = true;
      EXPECT_EQ(e.detail["code"], "division-by-zero");
    }
  }
  EXPECT_TRUE(saw);
}

TEST(Engine, GateApproveContinues) {
  auto plan = plan_run(dsl(kScriptFlow), catalog(),
                       {{"code", Value::text("import sys\nprint(sys.argv[1])")}, {"x", Value::integer(5)}});
  auto ctx = context(GatePolicy::Require);
  auto run = execute_run(plan, ctx);
  ASSERT_EQ(run.state, RunState::PausedForApproval);
  EXPECT_EQ(run.pending_gate, "s");
  EXPECT_EQ(run.trace.back().event, EventKind::RunPaused);
  EXPECT_EQ(run.trace.back().detail["inputs"]["Code"], "import sys\nprint(sys.argv[1])");
  auto done = resume_run(run, "s", true, ctx);
  EXPECT_EQ(done.state, RunState::Completed);
  EXPECT_EQ(done.outputs.at("stdout").as_text(), "5");
  EXPECT_EQ(done.outputs.at("r"), Value::integer(5));
  auto again = resume_run(done, "s", true, ctx);
  EXPECT_EQ(again.trace.size(), done.trace.size());
  EXPECT_EQ(code_of([&] { resume_run(done, "s", false, ctx); }), "wrong-state");
}

TEST(Engine, GateRejectStartsNothingDownstream) {
  auto plan = plan_run(dsl(kScriptFlow), catalog(), {{"code", Value::text("print(1)")}, {"x", Value::integer(5)}});
  auto ctx = context(GatePolicy::Require);
  auto run = execute_run(plan, ctx);
  EXPECT_EQ(code_of([&] { resume_run(run, "after", true, ctx); }), "unknown-gate");
  auto rejected = resume_run(run, "s", false, ctx);
  EXPECT_EQ(rejected.state, RunState::Rejected);
  auto ids = started(rejected);
  for (const auto* id : {"s", "after", "o", "r"}) {
    EXPECT_EQ(std::count(ids.begin(), ids.end(), id), 0) << id;
  }
  EXPECT_TRUE(rejected.trace.back().is_terminal());
}

TEST(Engine, GatePolicyOffRunsThrough) {
  auto plan = plan_run(dsl(kScriptFlow), catalog(), {{"code", Value::text("print('hi')")}, {"x", Value::integer(1)}});
  auto run = execute_run(plan, context(GatePolicy::Off));
  EXPECT_EQ(run.state, RunState::Completed);
  EXPECT_EQ(run.outputs.at("stdout").as_text(), "hi");
}

TEST(Engine, ScriptFailureFailsRun) {
  auto plan = plan_run(dsl(kScriptFlow), catalog(),
                       {{"code", Value::text("import sys\nprint('bad', file=sys.stderr)\nsys.exit(2)")},
                        {"x", Value::integer(1)}});
  auto run = execute_run(plan, context());
  EXPECT_EQ(run.state, RunState::Failed);
  for (const auto& e : run.trace) {
    if (e.event == EventKind::ModuleFailed) {
      EXPECT_EQ(e.detail["code"], "script-failed");
      EXPECT_EQ(e.detail["stderr"], "bad\n");
    }
  }
}

TEST(Engine, DeadlineCancelsRun) {
  auto plan = plan_run(dsl(kScriptFlow), catalog(),
                       {{"code", Value::text("import time\ntime.sleep(20)")}, {"x", Value::integer(1)}});
  auto ctx = context();
  ctx.deadline = 500ms;
  const auto start = std::chrono::steady_clock::now();
  auto run = execute_run(plan, ctx);
  EXPECT_LT(std::chrono::steady_clock::now() - start, 5s);
  EXPECT_EQ(run.state, RunState::Failed);
  EXPECT_EQ(run.trace.back().detail["reason"], "deadline exceeded");
}

TEST(Engine, OnEventSeesEveryEventInOrder) {
  std::vector<std::string> seen;
  auto ctx = context();
  ctx.on_event = [&](const TraceEvent& e) { seen.push_back(e.to_json_line()); };
  auto run = execute_run(plan_run(testkit::fixture_flow("add.flow"), catalog(), ints({{"x", 1}, {"y", 1}})), ctx);
  ASSERT_EQ(seen.size(), run.trace.size());
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], run.trace[i].to_json_line());
}

TEST(Engine, AppReferenceRunsInnerFlow) {
  FlowStore store;
  store.put(testkit::fixture_flow("add.flow"), "add");
  auto outer = dsl(R"(flow "outer" {
    module a: ExternalIntInput
    module r: AppReference { FlowId = "add" }
    module twice: Calculator { Operator = "*" }
    module o: ExternalIntOutput
    connect a.Result -> r.x
    connect a.Result -> r.y
    connect r.sum -> twice.Param1
    connect a.Result -> twice.Param2
    connect twice.Result -> o.Input
    extern input a.Input as "a"
    extern output o.Result as "o"
  })");
  auto run = execute_run(plan_run(outer, catalog(), ints({{"a", 3}}), &store), context(GatePolicy::Off, &store));
  EXPECT_EQ(run.state, RunState::Completed);
  EXPECT_EQ(run.outputs.at("o"), Value::integer(18));
}

TEST(Engine, AppReferenceChainAtMaximumDepth) {
  FlowStore store;
  store.put(testkit::fixture_flow("add.flow"), "level0");
  for (int i = 1; i < kMaxNesting; ++i) {
    store.put(dsl("flow \"l\" {\n module a: ExternalIntInput\n module b: ExternalIntInput\n"
                  " module r: AppReference { FlowId = \"level" + std::to_string(i - 1) + "\" }\n"
                  " module o: ExternalIntOutput\n connect a.Result -> r.x\n connect b.Result -> r.y\n"
                  " connect r.sum -> o.Input\n extern input a.Input as \"x\"\n extern input b.Input as \"y\"\n"
                  " extern output o.Result as \"sum\"\n}"),
              "level" + std::to_string(i));
  }
  auto top = *store.find_flow("level" + std::to_string(kMaxNesting - 1));
  auto run = execute_run(plan_run(top, catalog(), ints({{"x", 20}, {"y", 22}}), &store), context(GatePolicy::Off, &store));
  EXPECT_EQ(run.state, RunState::Completed);
  EXPECT_EQ(run.outputs.at("sum"), Value::integer(42));
}

TEST(Engine, AppReferenceInnerFailureSurfaces) {
  FlowStore store;
  store.put(dsl(R"(flow "div" {
    module x: ExternalIntInput
    module d: Calculator { Operator = "/" }
    module o: ExternalIntOutput
    connect x.Result -> d.Param1
    connect x.Result -> d.Param2
    connect d.Result -> o.Input
    extern input x.Input as "x"
    extern output o.Result as "q"
  })"),
            "div");
  auto outer = dsl(R"(flow "outer" {
    module a: ExternalIntInput
    module r: AppReference { FlowId = "div" }
    module o: ExternalIntOutput
    connect a.Result -> r.x
    connect r.q -> o.Input
    extern input a.Input as "a"
    extern output o.Result as "o"
  })");
  auto run = execute_run(plan_run(outer, catalog(), ints({{"a", 0}}), &store), context(GatePolicy::Off, &store));
  EXPECT_EQ(run.state, RunState::Failed);
  for (const auto& e : run.trace) {
    if (e.event == EventKind::ModuleFailed) {
      EXPECT_EQ(e.detail["code"], "reference-failed");
      EXPECT_EQ(e.detail["flowId"], "div");
    }
  }
}

TEST(Engine, ExpandVariables) {
  std::map<std::string, std::string> vars{{"A", "1"}, {"B", "two"}};
  EXPECT_EQ(expand_variables("${A}-${B}-$x-{y}", vars), "1-two-$x-{y}");
  EXPECT_EQ(code_of([&] { expand_variables("${C}", vars); }), "unbound-variable");
}

TEST(Engine, RandomDagProperties) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 25; ++i) {
    auto dag = testkit::random_dag(rng);
    auto plan = plan_run(dag.flow, catalog(), dag.inputs);
    auto ctx = context();
    ctx.max_parallel = 1;
    auto serial = execute_run(plan, ctx);
    ctx.max_parallel = 4;
    auto parallel = execute_run(plan, ctx);
    ASSERT_EQ(serial.state, RunState::Completed);
    ASSERT_EQ(parallel.state, RunState::Completed);
    EXPECT_EQ(serial.outputs, parallel.outputs);
    for (const auto& [name, v] : dag.expected) EXPECT_EQ(parallel.outputs.at(name), Value::integer(v));
  }
}

TEST(RunIds, AreUnique) {
  std::set<std::string> ids;
  for (int i = 0; i < 1000; ++i) ids.insert(new_run_id());
  EXPECT_EQ(ids.size(), 1000u);
}
