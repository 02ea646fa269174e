#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <boost/regex.hpp>

#include "jitflow/types.hpp"

namespace httplib {
class Server;
}

namespace jitflow::llm {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  std::optional<std::string> session_id;

  /// Wire body: exactly {"model", "messages"}.
  [[nodiscard]] Json to_wire() const;
  /// Throws Error("invalid-request") unless the last message is from the user.
  void check() const;
  [[nodiscard]] const std::string& last_user_message() const;
};

struct ChatResponse {
  std::string content;
  Json raw;
  std::string provider;
  bool from_cassette = false;
  int status_code = 200;
};

/// Builds the {"choices":[{"message":{...}}]} document the mock returns.
Json completion_document(const std::string& content);
/// Reads choices[0].message.content; throws Error("malformed-response").
std::string completion_content(const Json& raw);

enum class MatchType { Exact, Substring, Regex };

struct CassetteEntry {
  MatchType type = MatchType::Exact;
  std::string pattern;
  std::string response;
  std::optional<boost::regex> regex;

  [[nodiscard]] bool matches(std::string_view prompt) const;
};

/// Prompt -> response fixtures, first match wins in entry order.
class Cassette {
 public:
  Cassette() = default;
  explicit Cassette(std::string name) : name_(std::move(name)) {}

  /// Throws Error("cassette-invalid") on bad structure or regex patterns.
  static Cassette from_json(const Json& j);
  static Cassette load(const std::filesystem::path& path);

  void add(MatchType type, std::string pattern, std::string response);
  [[nodiscard]] const CassetteEntry* lookup(std::string_view prompt) const;
  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] const std::vector<CassetteEntry>& entries() const noexcept { return entries_; }
  [[nodiscard]] Json to_json() const;

 private:
  std::string name_;
  std::vector<CassetteEntry> entries_;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

class MockProvider : public Provider {
 public:
  explicit MockProvider(Cassette cassette) : cassette_(std::move(cassette)) {}
  /// Throws Error("no-match") naming the cassette.
  ChatResponse complete(const ChatRequest& request) override;
  [[nodiscard]] std::string name() const override { return "mock"; }

 private:
  Cassette cassette_;
};

class OpenAICompatProvider : public Provider {
 public:
  OpenAICompatProvider(std::string base_url, std::string api_key, int retries = 2)
      : base_url_(std::move(base_url)), api_key_(std::move(api_key)), retries_(retries) {}
  /// Throws Error("transport"), Error("llm-auth"), Error("llm-http") or
  /// Error("malformed-response").
  ChatResponse complete(const ChatRequest& request) override;
  [[nodiscard]] std::string name() const override { return "openai-compat"; }

 private:
  std::string base_url_;
  std::string api_key_;
  int retries_;
};

/// Answers from a JSON Lines exchange log; prompts not in the log go to
/// `live` and are appended. Without `live`, unrecorded prompts throw
/// Error("no-match").
class ReplayProvider : public Provider {
 public:
  ReplayProvider(std::filesystem::path log, std::unique_ptr<Provider> live);
  ChatResponse complete(const ChatRequest& request) override;
  [[nodiscard]] std::string name() const override { return "replay"; }

 private:
  std::filesystem::path log_;
  std::unique_ptr<Provider> live_;
  std::mutex mutex_;
};

/// Appends {"prompt","response","ts","provider"} as one JSON line.
void record(const std::filesystem::path& log, const ChatRequest& request, const ChatResponse& response);
/// Prompt -> response map of a log; later lines win.
std::map<std::string, std::string> read_log(const std::filesystem::path& log);

struct GatewayConfig {
  std::string provider = "openai-compat";  // openai-compat | mock | replay
  std::string base_url;
  std::string api_key;
  std::string model = "gpt-3.5-turbo";
  std::string cassette_path;
  std::string log_path;
  std::size_t max_session_messages = 20;

  /// Reads JITFLOW_LLM_PROVIDER, JITFLOW_LLM_BASE_URL, JITFLOW_LLM_API_KEY,
  /// JITFLOW_LLM_MODEL, JITFLOW_CASSETTE and JITFLOW_LLM_LOG.
  static GatewayConfig from_env();
};

/// Uniform completion entry point with per-session history.
class Gateway {
 public:
  Gateway(std::shared_ptr<Provider> provider, GatewayConfig config = {});
  /// Throws Error("llm-config") when the provider cannot be built.
  static std::unique_ptr<Gateway> from_config(const GatewayConfig& config);

  /// Fills the default model, prepends and extends session history.
  ChatResponse complete(ChatRequest request);
  /// Single user turn without a session.
  ChatResponse ask(const std::string& prompt);

  [[nodiscard]] std::vector<ChatMessage> session(const std::string& id) const;
  [[nodiscard]] const GatewayConfig& config() const noexcept { return config_; }
  [[nodiscard]] Provider& provider() noexcept { return *provider_; }

 private:
  std::shared_ptr<Provider> provider_;
  GatewayConfig config_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::vector<ChatMessage>> sessions_;
  std::map<std::string, std::unique_ptr<std::mutex>> session_locks_;
};

/// A request as seen by the mock server, for wire assertions.
struct ReceivedRequest {
  std::string method;
  std::string path;
  std::multimap<std::string, std::string> headers;
  std::string body;

  [[nodiscard]] std::optional<std::string> header(const std::string& name) const;
};

/// Loopback chat-completions server backed by a cassette.
class MockServer {
 public:
  /// Binds 127.0.0.1:`port` (0 picks a free port) and starts serving.
  /// Throws Error("bind") when the port is taken.
  MockServer(Cassette cassette, int port = 0, const std::string& host = "127.0.0.1");
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  [[nodiscard]] int port() const noexcept { return port_; }
  [[nodiscard]] std::string base_url() const;
  [[nodiscard]] std::vector<ReceivedRequest> requests() const;
  /// Blocks until stop() is called from another thread or a signal.
  void wait();
  void stop();

 private:
  Cassette cassette_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
  mutable std::mutex mutex_;
  std::vector<ReceivedRequest> requests_;
};

std::unique_ptr<MockServer> serve_mock(Cassette cassette, int port = 0);

}  // namespace jitflow::llm
