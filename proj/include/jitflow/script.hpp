#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <stop_token>
#include <string>
#include <vector>

#include "jitflow/engine.hpp"
#include "jitflow/types.hpp"

namespace jitflow::script {

/// Private temporary directory removed on destruction.
class Workdir {
 public:
  Workdir();
  ~Workdir();
  Workdir(const Workdir&) = delete;
  Workdir& operator=(const Workdir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
  void write(const std::string& name, std::string_view content) const;
  [[nodiscard]] std::string read(const std::string& name) const;
  [[nodiscard]] bool exists(const std::string& name) const;

 private:
  std::filesystem::path path_;
};

struct ProcessResult {
  std::string stdout_text;
  std::string stderr_text;
  int exit_code = 0;
  bool timed_out = false;
  bool cancelled = false;
};

/// Spawns argv in `workdir` with exactly `env`, captures both streams and
/// kills the process group on timeout or stop request. Throws
/// Error("interpreter-missing") when argv[0] cannot be executed.
ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& workdir,
                          const std::map<std::string, std::string>& env, std::chrono::milliseconds timeout,
                          std::stop_token stop = {});

/// One execution of generated code: what ran, where, and what came back.
struct ScriptInvocation {
  std::vector<std::string> argv;
  std::string workdir;
  std::chrono::milliseconds timeout{0};
  std::string stdout_text;
  std::string stderr_text;
  int exit_code = 0;

  [[nodiscard]] Json to_json() const;
};

struct ScriptOptions {
  InterpreterConfig interpreter;
  std::string run_id;
  std::stop_token stop;
};

/// Writes `code` to a temp file, runs it with `args`, and captures output.
/// A nonzero exit is reported in the invocation, not thrown; timeouts throw
/// Error("timeout").
ScriptInvocation run_code_script(const std::string& code, const std::vector<std::string>& args,
                                 const ScriptOptions& options);

/// Defines `code`, calls `function_name(*args)` and parses the printed
/// return value as `result_type` (Int, Real, Bool or Text). Throws
/// Error("script-failed") on nonzero exit, Error("timeout"), or
/// Error("unparseable-result").
struct FunctionRun {
  Value result;
  ScriptInvocation invocation;
};
FunctionRun run_code_function(const std::string& code, const std::string& function_name,
                              const std::vector<Value>& args, const PortType& result_type,
                              const ScriptOptions& options);

/// Table bridge: inputs land in in_<k>.csv and are loaded into `input_dfs`;
/// whatever `composable_table_out` holds afterwards is written to out.csv and
/// parsed back. Throws Error("missing-output") when out.csv is absent.
struct TableRun {
  Table table;
  ScriptInvocation invocation;
};
TableRun run_code_table(const std::string& code, const std::vector<Table>& inputs, const ScriptOptions& options);

/// Parses trimmed script output per a scalar result type.
Value parse_result(std::string_view text, const PortType& result_type);

/// Drops trailing CR/LF characters.
std::string trim_trailing_newlines(std::string text);

}  // namespace jitflow::script
