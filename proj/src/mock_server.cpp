#include <httplib.h>

#include "jitflow/error.hpp"
#include "jitflow/llm.hpp"

namespace jitflow::llm {

std::optional<std::string> ReceivedRequest::header(const std::string& name) const {
  for (const auto& [k, v] : headers) {
    if (k.size() == name.size() &&
        std::equal(k.begin(), k.end(), name.begin(), [](char a, char b) { return std::tolower(a) == std::tolower(b); })) {
      return v;
    }
  }
  return std::nullopt;
}

MockServer::MockServer(Cassette cassette, int port, const std::string& host)
    : cassette_(std::move(cassette)), server_(std::make_unique<httplib::Server>()), host_(host) {
  server_->Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lock(mutex_);
      ReceivedRequest r{req.method, req.path, {}, req.body};
      for (const auto& [k, v] : req.headers) r.headers.emplace(k, v);
      requests_.push_back(std::move(r));
    }
    Json body;
    try {
      body = Json::parse(req.body);
    } catch (const Json::parse_error& e) {
      res.status = 400;
      res.set_content(Json{{"error", {{"message", std::string("malformed JSON: ") + e.what()}}}}.dump(),
                      "application/json");
      return;
    }
    std::optional<std::string> prompt;
    if (body.is_object() && body.contains("messages") && body["messages"].is_array()) {
      for (const auto& m : body["messages"]) {
        if (m.is_object() && m.value("role", "") == "user" && m.contains("content") && m["content"].is_string()) {
          prompt = m["content"].get<std::string>();
        }
      }
    }
    if (!prompt) {
      res.status = 400;
      res.set_content(Json{{"error", {{"message", "request has no user message"}}}}.dump(), "application/json");
      return;
    }
    const auto* entry = cassette_.lookup(*prompt);
    if (entry == nullptr) {
      res.status = 404;
      res.set_content(
          Json{{"error", {{"message", "no cassette entry matches the prompt"}, {"cassette", cassette_.name()}}}}.dump(),
          "application/json");
      return;
    }
    res.status = 200;
    res.set_content(completion_document(entry->response).dump(), "application/json");
  });

  if (port == 0) {
    port_ = server_->bind_to_any_port(host_);
    if (port_ < 0) throw Error("bind", "cannot bind a free port on " + host_);
  } else {
    if (!server_->bind_to_port(host_, port)) throw Error("bind", "cannot bind " + host_ + ":" + std::to_string(port));
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

MockServer::~MockServer() { stop(); }

std::string MockServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

std::vector<ReceivedRequest> MockServer::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

void MockServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void MockServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::unique_ptr<MockServer> serve_mock(Cassette cassette, int port) {
  return std::make_unique<MockServer>(std::move(cassette), port);
}

}  // namespace jitflow::llm
