#include "jitflow/script.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>

#include "jitflow/assets.hpp"
#include "jitflow/csv.hpp"
#include "jitflow/error.hpp"

namespace jitflow::script {

namespace fs = std::filesystem;

Workdir::Workdir() {
  std::random_device rd;
  std::mt19937_64 gen(rd());
  for (int attempt = 0; attempt < 16; ++attempt) {
    char name[32];
    std::snprintf(name, sizeof(name), "jitflow-%016llx", static_cast<unsigned long long>(gen()));
    auto candidate = fs::temp_directory_path() / name;
    std::error_code ec;
    if (fs::create_directory(candidate, ec)) {
      fs::permissions(candidate, fs::perms::owner_all, ec);
      path_ = candidate;
      return;
    }
  }
  throw Error("workdir", "could not create a private working directory");
}

Workdir::~Workdir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void Workdir::write(const std::string& name, std::string_view content) const {
  std::ofstream out(path_ / name, std::ios::binary);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("workdir", "could not write " + name);
}

std::string Workdir::read(const std::string& name) const {
  std::ifstream in(path_ / name, std::ios::binary);
  if (!in) throw Error("workdir", "could not read " + name);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool Workdir::exists(const std::string& name) const { return fs::exists(path_ / name); }

namespace {

struct Pipe {
  int fds[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fds, O_CLOEXEC) != 0) throw Error("spawn", std::string("pipe: ") + std::strerror(errno));
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (fds[0] >= 0) ::close(fds[0]);
    fds[0] = -1;
  }
  void close_write() {
    if (fds[1] >= 0) ::close(fds[1]);
    fds[1] = -1;
  }
};

std::vector<std::string> split_command(const std::string& command) {
  std::istringstream ss(command);
  std::vector<std::string> parts;
  for (std::string p; ss >> p;) parts.push_back(p);
  if (parts.empty()) throw Error("interpreter-missing", "interpreter command is empty");
  return parts;
}

std::map<std::string, std::string> script_env(const std::string& run_id) {
  std::map<std::string, std::string> env;
  const char* path = std::getenv("PATH");
  env["PATH"] = path != nullptr ? path : "/usr/local/bin:/usr/bin:/bin";
  env["JITFLOW_RUN_ID"] = run_id;
  return env;
}

void send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("spawn", std::string("fork server send: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

// Reads one line from fd, polling in short ticks; tick() returning false stops
// the wait. Returns nullopt on EOF or when stopped.
std::optional<std::string> read_line(int fd, std::string& buffer, const std::function<bool()>& tick) {
  char buf[4096];
  for (;;) {
    if (auto nl = buffer.find('\n'); nl != std::string::npos) {
      auto line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      return line;
    }
    if (!tick()) return std::nullopt;
    pollfd p{fd, POLLIN, 0};
    int n = ::poll(&p, 1, 20);
    if (n < 0 && errno != EINTR) return std::nullopt;
    if (n <= 0) continue;
    ssize_t got = ::read(fd, buf, sizeof(buf));
    if (got == 0 || (got < 0 && errno != EINTR && errno != EAGAIN)) return std::nullopt;
    if (got > 0) buffer.append(buf, static_cast<std::size_t>(got));
  }
}

// A python process that imports the preload modules once and forks a child
// for each script it is asked to run.
class ForkServer {
 public:
  ForkServer(const std::vector<std::string>& interpreter, const std::vector<std::string>& preload) {
    home_.write("forkserver.py", asset("forkserver.py"));
    socket_ = home_.path() / "sock";
    std::vector<std::string> argv = interpreter;
    argv.push_back((home_.path() / "forkserver.py").string());
    argv.push_back(socket_.string());
    argv.insert(argv.end(), preload.begin(), preload.end());

    Pipe in, out;
    int devnull = ::open("/dev/null", O_WRONLY | O_CLOEXEC);
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in.fds[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out.fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, devnull, STDERR_FILENO);
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP | POSIX_SPAWN_SETSIGMASK | POSIX_SPAWN_SETSIGDEF);
    posix_spawnattr_setpgroup(&attr, 0);
    sigset_t none, all;
    sigemptyset(&none);
    sigfillset(&all);
    posix_spawnattr_setsigmask(&attr, &none);
    posix_spawnattr_setsigdefault(&attr, &all);
    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    std::vector<std::string> env_strings;
    for (const auto& [k, v] : script_env("")) env_strings.push_back(k + "=" + v);
    std::vector<char*> cenv;
    for (auto& e : env_strings) cenv.push_back(e.data());
    cenv.push_back(nullptr);
    int rc = posix_spawnp(&pid_, argv[0].c_str(), &actions, &attr, cargv.data(), cenv.data());
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);
    if (devnull >= 0) ::close(devnull);
    if (rc != 0) {
      throw Error("interpreter-missing", "cannot execute '" + argv[0] + "': " + std::strerror(rc),
                  Json{{"argv", argv}});
    }
    in.close_read();
    out.close_write();
    stdin_ = in.fds[1];
    in.fds[1] = -1;
    stdout_ = out.fds[0];
    out.fds[0] = -1;

    std::string buffer;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60);
    auto line = read_line(stdout_, buffer, [&] { return std::chrono::steady_clock::now() < deadline; });
    if (!line || *line != "ready") {
      shutdown();
      throw Error("interpreter-missing", "fork server did not start", Json{{"argv", argv}});
    }
  }

  ~ForkServer() { shutdown(); }
  ForkServer(const ForkServer&) = delete;
  ForkServer& operator=(const ForkServer&) = delete;

  // nullopt when the server cannot be reached.
  std::optional<ProcessResult> run(const std::vector<std::string>& argv, const fs::path& workdir,
                                   const std::map<std::string, std::string>& env,
                                   std::chrono::milliseconds timeout, std::stop_token stop) {
    int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) return std::nullopt;
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, socket_.c_str(), sizeof(addr.sun_path) - 1);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd);
      return std::nullopt;
    }
    Workdir capture;
    Json request{{"argv", argv},
                 {"cwd", workdir.string()},
                 {"env", env},
                 {"stdout", (capture.path() / "stdout").string()},
                 {"stderr", (capture.path() / "stderr").string()}};
    try {
      send_all(fd, request.dump() + "\n");
    } catch (const Error&) {
      ::close(fd);
      return std::nullopt;
    }

    ProcessResult result;
    const auto started = std::chrono::steady_clock::now();
    pid_t child = 0;
    bool killed = false;
    auto tick = [&] {
      if (killed || child == 0) return true;
      if (stop.stop_requested()) {
        result.cancelled = true;
      } else if (std::chrono::steady_clock::now() - started >= timeout) {
        result.timed_out = true;
      }
      if (result.cancelled || result.timed_out) {
        ::kill(-child, SIGKILL);
        killed = true;
      }
      return true;
    };
    std::string buffer;
    auto hello = read_line(fd, buffer, tick);
    if (!hello) {
      ::close(fd);
      return std::nullopt;
    }
    child = Json::parse(*hello).value("pid", 0);
    std::optional<int> exit_code;
    while (auto line = read_line(fd, buffer, tick)) {
      auto msg = Json::parse(*line, nullptr, false);
      if (msg.is_object() && msg.contains("exit")) exit_code = msg["exit"].get<int>();
    }
    ::close(fd);
    if (child > 0) ::kill(-child, SIGKILL);  // stray grandchildren
    result.exit_code = exit_code && !killed ? *exit_code & 0xff : 128 + SIGKILL;
    if (capture.exists("stdout")) result.stdout_text = capture.read("stdout");
    if (capture.exists("stderr")) result.stderr_text = capture.read("stderr");
    return result;
  }

 private:
  void shutdown() {
    if (stdin_ >= 0) ::close(stdin_);
    if (stdout_ >= 0) ::close(stdout_);
    stdin_ = stdout_ = -1;
    if (pid_ > 0) {
      ::kill(-pid_, SIGKILL);
      int status = 0;
      while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
      }
      pid_ = 0;
    }
  }

  Workdir home_;
  fs::path socket_;
  pid_t pid_ = 0;
  int stdin_ = -1;
  int stdout_ = -1;
};

std::shared_ptr<ForkServer> fork_server(const std::vector<std::string>& interpreter,
                                        const std::vector<std::string>& preload,
                                        const std::shared_ptr<ForkServer>& broken = nullptr) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<ForkServer>> servers;
  std::string key;
  for (const auto& part : interpreter) key += part + '\x1f';
  key += '\x1e';
  for (const auto& name : preload) key += name + '\x1f';
  std::lock_guard lock(mutex);
  auto& slot = servers[key];
  if (!slot || (broken && slot == broken)) slot = std::make_shared<ForkServer>(interpreter, preload);
  return slot;
}

ProcessResult run_warm(const std::vector<std::string>& argv, std::size_t interpreter_parts, const fs::path& workdir,
                       const std::map<std::string, std::string>& env, const ScriptOptions& options) {
  std::vector<std::string> interpreter(argv.begin(), argv.begin() + static_cast<std::ptrdiff_t>(interpreter_parts));
  std::vector<std::string> script(argv.begin() + static_cast<std::ptrdiff_t>(interpreter_parts), argv.end());
  auto server = fork_server(interpreter, options.interpreter.preload);
  auto result = server->run(script, workdir, env, options.interpreter.timeout, options.stop);
  if (!result) {
    server = fork_server(interpreter, options.interpreter.preload, server);
    result = server->run(script, workdir, env, options.interpreter.timeout, options.stop);
  }
  if (!result) throw Error("spawn", "fork server unreachable", Json{{"argv", argv}});
  return std::move(*result);
}

ScriptInvocation invoke(const Workdir& dir, std::vector<std::string> argv, const ScriptOptions& options) {
  ScriptInvocation inv;
  inv.argv = argv;
  inv.workdir = dir.path().string();
  inv.timeout = options.interpreter.timeout;
  auto env = script_env(options.run_id);
  auto result = options.interpreter.preload.empty()
                    ? run_process(argv, dir.path(), env, options.interpreter.timeout, options.stop)
                    : run_warm(argv, split_command(options.interpreter.command).size(), dir.path(), env, options);
  inv.stdout_text = std::move(result.stdout_text);
  inv.stderr_text = std::move(result.stderr_text);
  inv.exit_code = result.exit_code;
  if (result.cancelled) throw Error("cancelled", "script cancelled", inv.to_json());
  if (result.timed_out) {
    throw Error("timeout",
                "script exceeded " + std::to_string(options.interpreter.timeout.count()) + " ms and was killed",
                inv.to_json());
  }
  return inv;
}

void require_success(const ScriptInvocation& inv) {
  if (inv.exit_code == 0) return;
  std::string first_line = inv.stderr_text;
  auto trimmed = trim_trailing_newlines(first_line);
  auto pos = trimmed.rfind('\n');
  auto last = pos == std::string::npos ? trimmed : trimmed.substr(pos + 1);
  throw Error("script-failed", "script exited with code " + std::to_string(inv.exit_code) + (last.empty() ? "" : ": " + last),
              inv.to_json());
}

std::string python_string(std::string_view s) { return Json(std::string(s)).dump(); }

std::string argv_form(const Value& v) {
  if (v.type() == types::Text()) return v.as_text();
  return stringify_scalar(v);
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const fs::path& workdir,
                          const std::map<std::string, std::string>& env, std::chrono::milliseconds timeout,
                          std::stop_token stop) {
  if (argv.empty()) throw Error("interpreter-missing", "empty command");
  Pipe out, err;
  int devnull = ::open("/dev/null", O_RDONLY | O_CLOEXEC);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, devnull, STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out.fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err.fds[1], STDERR_FILENO);
  posix_spawn_file_actions_addchdir_np(&actions, workdir.c_str());

  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP | POSIX_SPAWN_SETSIGMASK | POSIX_SPAWN_SETSIGDEF);
  posix_spawnattr_setpgroup(&attr, 0);
  sigset_t none, all;
  sigemptyset(&none);
  sigfillset(&all);
  posix_spawnattr_setsigmask(&attr, &none);
  posix_spawnattr_setsigdefault(&attr, &all);

  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  std::vector<std::string> env_strings;
  for (const auto& [k, v] : env) env_strings.push_back(k + "=" + v);
  std::vector<char*> cenv;
  for (auto& e : env_strings) cenv.push_back(e.data());
  cenv.push_back(nullptr);

  // posix_spawnp searches the parent's PATH; resolve against the child's.
  std::string program = argv[0];
  if (program.find('/') == std::string::npos) {
    auto it = env.find("PATH");
    std::istringstream dirs(it != env.end() ? it->second : "");
    for (std::string dir; std::getline(dirs, dir, ':');) {
      auto candidate = fs::path(dir.empty() ? "." : dir) / program;
      if (::access(candidate.c_str(), X_OK) == 0) {
        program = candidate.string();
        break;
      }
    }
  }

  pid_t pid = 0;
  int rc = posix_spawn(&pid, program.c_str(), &actions, &attr, cargv.data(), cenv.data());
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  if (devnull >= 0) ::close(devnull);
  if (rc != 0) {
    throw Error("interpreter-missing", "cannot execute '" + argv[0] + "': " + std::strerror(rc),
                Json{{"argv", argv}});
  }
  out.close_write();
  err.close_write();

  ProcessResult result;
  const auto started = std::chrono::steady_clock::now();
  std::array<pollfd, 2> fds{pollfd{out.fds[0], POLLIN, 0}, pollfd{err.fds[0], POLLIN, 0}};
  std::array<std::string*, 2> sinks{&result.stdout_text, &result.stderr_text};
  int open_streams = 2;
  bool killed = false;
  char buf[65536];
  while (open_streams > 0) {
    if (!killed) {
      if (stop.stop_requested()) {
        result.cancelled = true;
      } else if (std::chrono::steady_clock::now() - started >= timeout) {
        result.timed_out = true;
      }
      if (result.cancelled || result.timed_out) {
        ::kill(-pid, SIGKILL);
        killed = true;
      }
    }
    int n = ::poll(fds.data(), fds.size(), 20);
    if (n < 0 && errno != EINTR) break;
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (fds[i].fd < 0 || fds[i].revents == 0) continue;
      ssize_t got = ::read(fds[i].fd, buf, sizeof(buf));
      if (got > 0) {
        sinks[i]->append(buf, static_cast<std::size_t>(got));
      } else if (got == 0 || (errno != EINTR && errno != EAGAIN)) {
        fds[i].fd = -1;
        --open_streams;
      }
    }
  }

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (!killed) ::kill(-pid, SIGKILL);  // stray grandchildren
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

Json ScriptInvocation::to_json() const {
  return Json{{"argv", argv},
              {"workdir", workdir},
              {"timeoutMs", static_cast<std::int64_t>(timeout.count())},
              {"exitCode", exit_code},
              {"stdout", stdout_text},
              {"stderr", stderr_text}};
}

std::string trim_trailing_newlines(std::string text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

Value parse_result(std::string_view raw, const PortType& result_type) {
  std::string text(raw);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
  std::size_t start = 0;
  while (start < text.size() && std::isspace(static_cast<unsigned char>(text[start]))) ++start;
  text.erase(0, start);
  auto fail = [&]() -> Value {
    throw Error("unparseable-result", "cannot read '" + text + "' as " + result_type.to_string(),
                Json{{"output", text}, {"resultType", result_type.to_string()}});
  };
  if (result_type == types::Text()) return Value::text(text);
  if (result_type == types::Int()) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return fail();
    return Value::integer(v);
  }
  if (result_type == types::Real()) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return fail();
    return Value::real(v);
  }
  if (result_type == types::Bool()) {
    if (text == "True" || text == "true" || text == "1") return Value::boolean(true);
    if (text == "False" || text == "false" || text == "0") return Value::boolean(false);
    return fail();
  }
  throw Error("invalid-param", "unsupported result type " + result_type.to_string());
}

ScriptInvocation run_code_script(const std::string& code, const std::vector<std::string>& args,
                                 const ScriptOptions& options) {
  Workdir dir;
  dir.write("script", code);
  auto argv = split_command(options.interpreter.command);
  argv.push_back("script");
  argv.insert(argv.end(), args.begin(), args.end());
  return invoke(dir, std::move(argv), options);
}

FunctionRun run_code_function(const std::string& code, const std::string& function_name,
                              const std::vector<Value>& args, const PortType& result_type,
                              const ScriptOptions& options) {
  Workdir dir;
  dir.write("code.py", code);
  std::string converters = "[";
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& t = args[i].type();
    if (i) converters += ", ";
    if (t == types::Int()) {
      converters += "int";
    } else if (t == types::Real()) {
      converters += "float";
    } else if (t == types::Bool()) {
      converters += "lambda s: s == 'true'";
    } else {
      converters += "str";
    }
  }
  converters += "]";
  std::ostringstream harness;
  harness << "import json, runpy, sys\n"
          << "_ns = runpy.run_path('code.py', run_name='jitflow_code')\n"
          << "_fn = _ns.get(" << python_string(function_name) << ")\n"
          << "if not callable(_fn):\n"
          << "    sys.exit('code does not define a function named ' + " << python_string(function_name) << ")\n"
          << "_conv = " << converters << "\n"
          << "_result = _fn(*[c(a) for c, a in zip(_conv, sys.argv[1:])])\n"
          << "sys.stdout.write('\\n' + json.dumps(_result, default=str) + '\\n')\n";
  dir.write("harness.py", harness.str());
  auto argv = split_command(options.interpreter.command);
  argv.push_back("harness.py");
  for (const auto& a : args) argv.push_back(argv_form(a));
  auto inv = invoke(dir, std::move(argv), options);
  require_success(inv);

  auto out = trim_trailing_newlines(inv.stdout_text);
  auto pos = out.rfind('\n');
  std::string last = pos == std::string::npos ? out : out.substr(pos + 1);
  std::string scalar = last;
  try {
    auto j = Json::parse(last);
    if (j.is_string()) {
      scalar = j.get<std::string>();
    } else if (j.is_boolean()) {
      scalar = j.get<bool>() ? "true" : "false";
    } else if (j.is_number()) {
      scalar = j.dump();
      if (result_type == types::Int() && j.is_number_float()) {
        double d = j.get<double>();
        if (d == static_cast<double>(static_cast<std::int64_t>(d))) scalar = std::to_string(static_cast<std::int64_t>(d));
      }
    }
  } catch (const Json::parse_error&) {
  }
  try {
    return FunctionRun{parse_result(scalar, result_type), std::move(inv)};
  } catch (const Error& e) {
    auto detail = inv.to_json();
    detail["resultType"] = result_type.to_string();
    throw Error(e.code(), e.what(), detail);
  }
}

TableRun run_code_table(const std::string& code, const std::vector<Table>& inputs, const ScriptOptions& options) {
  Workdir dir;
  dir.write("code.py", code);
  for (std::size_t k = 0; k < inputs.size(); ++k) dir.write("in_" + std::to_string(k) + ".csv", csv::write_table(inputs[k]));
  std::ostringstream harness;
  harness << "import runpy\n"
          << "import pandas as pd\n"
          << "input_dfs = [pd.read_csv('in_%d.csv' % k, keep_default_na=False, na_values=['']) for k in range("
          << inputs.size() << ")]\n"
          << "_ns = runpy.run_path('code.py', init_globals={'input_dfs': input_dfs, 'pd': pd}, run_name='__main__')\n"
          << "if 'composable_table_out' in _ns:\n"
          << "    _out = _ns['composable_table_out']\n"
          << "    if not isinstance(_out, pd.DataFrame):\n"
          << "        _out = pd.DataFrame(_out)\n"
          << "    _out.to_csv('out.csv', index=False)\n";
  dir.write("harness.py", harness.str());
  auto argv = split_command(options.interpreter.command);
  argv.push_back("harness.py");
  auto inv = invoke(dir, std::move(argv), options);
  require_success(inv);
  if (!dir.exists("out.csv")) {
    throw Error("missing-output", "code did not define composable_table_out", inv.to_json());
  }
  try {
    return TableRun{csv::read_table(dir.read("out.csv")), std::move(inv)};
  } catch (const Error& e) {
    throw Error(e.code(), std::string("output table: ") + e.what(), inv.to_json());
  }
}

}  // namespace jitflow::script
