#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "jitflow/error.hpp"
#include "jitflow/script.hpp"

using namespace jitflow;
using namespace jitflow::script;
using namespace std::chrono_literals;

namespace {

ScriptOptions options(std::chrono::milliseconds timeout = 10s) {
  ScriptOptions o;
  o.interpreter.timeout = timeout;
  o.run_id = "test-run";
  return o;
}

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST(Workdir, RemovedOnDestruction) {
  std::filesystem::path p;
  {
    Workdir w;
    p = w.path();
    w.write("a.txt", "hi");
    EXPECT_TRUE(w.exists("a.txt"));
    EXPECT_EQ(w.read("a.txt"), "hi");
  }
  EXPECT_FALSE(std::filesystem::exists(p));
}

TEST(Script, CapturesOutputAndArgs) {
  auto r = run_code_script("import sys\nprint('args', sys.argv[1:])\nprint('oops', file=sys.stderr)\n", {"31", "x y"},
                           options());
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.stdout_text, "args ['31', 'x y']\n");
  EXPECT_EQ(r.stderr_text, "oops\n");
  EXPECT_EQ(r.argv.front(), "python3");
}

TEST(Script, NonzeroExitIsReported) {
  auto r = run_code_script("import sys\nsys.exit(3)\n", {}, options());
  EXPECT_EQ(r.exit_code, 3);
}

TEST(Script, EnvironmentIsScrubbed) {
  ::setenv("JITFLOW_SECRET_FOR_TEST", "leak", 1);
  auto r = run_code_script("import os\nprint(sorted(os.environ.keys()))\nprint(os.environ['JITFLOW_RUN_ID'])\n", {},
                           options());
  EXPECT_EQ(r.stdout_text.find("JITFLOW_SECRET_FOR_TEST"), std::string::npos);
  EXPECT_NE(r.stdout_text.find("test-run"), std::string::npos);
}

TEST(Script, RunsInPrivateWorkdir) {
  auto r = run_code_script("import os\nprint(os.getcwd())\nopen('f.txt','w').write('x')\n", {}, options());
  const auto dir = std::filesystem::path(trim_trailing_newlines(r.stdout_text));
  EXPECT_NE(dir, std::filesystem::current_path());
  EXPECT_EQ(dir.string(), r.workdir);
  EXPECT_FALSE(std::filesystem::exists(dir));
}

TEST(Script, TimeoutKillsProcessGroup) {
  const auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(code_of([] {
              run_code_script("import subprocess, time\nsubprocess.Popen(['sleep','30'])\ntime.sleep(30)\n", {},
                              options(300ms));
            }),
            "timeout");
  EXPECT_LT(std::chrono::steady_clock::now() - start, 5s);
}

TEST(Script, StopTokenCancels) {
  std::stop_source stop;
  auto o = options(30s);
  o.stop = stop.get_token();
  std::thread t([&] {
    std::this_thread::sleep_for(200ms);
    stop.request_stop();
  });
  EXPECT_EQ(code_of([&] { run_code_script("import time\ntime.sleep(30)\n", {}, o); }), "cancelled");
  t.join();
}

TEST(Script, MissingInterpreter) {
  auto o = options();
  o.interpreter.command = "definitely-not-an-interpreter-xyz";
  EXPECT_EQ(code_of([&] { run_code_script("print(1)", {}, o); }), "interpreter-missing");
}

TEST(Function, CallsWithTypedArgs) {
  auto r = run_code_function("def gptFunction(a, b):\n    return a + b\n", "gptFunction",
                             {Value::integer(3), Value::integer(4)}, types::Int(), options());
  EXPECT_EQ(r.result, Value::integer(7));
  auto t = run_code_function("def f(s, x, ok):\n    print('noise')\n    return f'{s}:{x*2}:{ok}'\n", "f",
                             {Value::text("a b"), Value::real(1.25), Value::boolean(false)}, types::Text(), options());
  EXPECT_EQ(t.result.as_text(), "a b:2.5:False");
}

TEST(Function, Failures) {
  EXPECT_EQ(code_of([] {
              run_code_function("def g():\n    raise ValueError('bad')\n", "g", {}, types::Int(), options());
            }),
            "script-failed");
  EXPECT_EQ(code_of([] { run_code_function("x = 1\n", "g", {}, types::Int(), options()); }), "script-failed");
  EXPECT_EQ(code_of([] { run_code_function("def g():\n    return 'abc'\n", "g", {}, types::Int(), options()); }),
            "unparseable-result");
}

TEST(Table, RoundTripThroughPandas) {
  Table in({"name", "n"}, {{std::string("a"), 1.0}, {std::string("b"), 2.0}, {std::string("a"), 1.0}});
  auto r = run_code_table("composable_table_out = input_dfs[0][input_dfs[0]['n'] > 1]\nprint('done')\n", {in},
                          options(30s));
  EXPECT_EQ(r.table, Table({"name", "n"}, {{std::string("b"), 2.0}}));
  EXPECT_EQ(r.invocation.stdout_text, "done\n");
}

TEST(Table, MissingOutput) {
  EXPECT_EQ(code_of([] { run_code_table("x = 1\n", {}, options(30s)); }), "missing-output");
}

ScriptOptions warm(std::chrono::milliseconds timeout = 10s) {
  auto o = options(timeout);
  o.interpreter.preload = {"json"};
  return o;
}

TEST(WarmScript, CapturesOutputArgsAndExit) {
  auto r = run_code_script("import sys\nprint('args', sys.argv[1:])\nprint('oops', file=sys.stderr)\n", {"31", "x y"},
                           warm());
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.stdout_text, "args ['31', 'x y']\n");
  EXPECT_EQ(r.stderr_text, "oops\n");
  EXPECT_EQ(run_code_script("import sys\nsys.exit(3)\n", {}, warm()).exit_code, 3);
  auto failed = run_code_script("raise ValueError('boom')\n", {}, warm());
  EXPECT_EQ(failed.exit_code, 1);
  EXPECT_NE(failed.stderr_text.find("ValueError: boom"), std::string::npos);
}

TEST(WarmScript, ScrubbedEnvironmentAndPrivateWorkdir) {
  ::setenv("JITFLOW_SECRET_FOR_TEST", "leak", 1);
  auto r = run_code_script(
      "import os\nprint(os.getcwd())\nprint(sorted(os.environ.keys()))\nprint(os.environ['JITFLOW_RUN_ID'])\n", {},
      warm());
  EXPECT_EQ(r.stdout_text.find("JITFLOW_SECRET_FOR_TEST"), std::string::npos);
  EXPECT_NE(r.stdout_text.find("test-run"), std::string::npos);
  EXPECT_EQ(r.stdout_text.substr(0, r.stdout_text.find('\n')), r.workdir);
  EXPECT_FALSE(std::filesystem::exists(r.workdir));
}

TEST(WarmScript, TimeoutAndCancel) {
  const auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(code_of([] {
              run_code_script("import subprocess, time\nsubprocess.Popen(['sleep','30'])\ntime.sleep(30)\n", {},
                              warm(300ms));
            }),
            "timeout");
  EXPECT_LT(std::chrono::steady_clock::now() - start, 5s);
  std::stop_source stop;
  auto o = warm(30s);
  o.stop = stop.get_token();
  std::thread t([&] {
    std::this_thread::sleep_for(200ms);
    stop.request_stop();
  });
  EXPECT_EQ(code_of([&] { run_code_script("import time\ntime.sleep(30)\n", {}, o); }), "cancelled");
  t.join();
  EXPECT_EQ(run_code_script("print('still up')\n", {}, warm()).stdout_text, "still up\n");
}

TEST(WarmScript, TablesAndFunctions) {
  auto o = warm(30s);
  o.interpreter.preload = {"pandas"};
  Table in({"name", "n"}, {{std::string("a"), 1.0}, {std::string("b"), 2.0}});
  auto r = run_code_table("composable_table_out = input_dfs[0][input_dfs[0]['n'] > 1]\n", {in}, o);
  EXPECT_EQ(r.table, Table({"name", "n"}, {{std::string("b"), 2.0}}));
  auto f = run_code_function("def gptFunction(a, b):\n    return a - b\n", "gptFunction",
                             {Value::integer(10), Value::integer(4)}, types::Int(), o);
  EXPECT_EQ(f.result, Value::integer(6));
}

TEST(WarmScript, UnknownPreloadModule) {
  auto o = warm();
  o.interpreter.preload = {"no_such_module_xyz"};
  EXPECT_EQ(code_of([&] { run_code_script("print(1)", {}, o); }), "interpreter-missing");
}

TEST(ParseResult, Conversions) {
  EXPECT_EQ(parse_result(" 42\n", types::Int()), Value::integer(42));
  EXPECT_EQ(parse_result("1.5", types::Real()), Value::real(1.5));
  EXPECT_EQ(parse_result("True", types::Bool()), Value::boolean(true));
  EXPECT_EQ(parse_result("0", types::Bool()), Value::boolean(false));
  EXPECT_EQ(parse_result("x\n\n", types::Text()), Value::text("x"));
  EXPECT_EQ(code_of([] { parse_result("4x", types::Int()); }), "unparseable-result");
  EXPECT_EQ(trim_trailing_newlines("a\r\n\n"), "a");
}
