#include "jitflow/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>

#include "jitflow/error.hpp"
#include "jitflow/stdlib.hpp"

namespace jitflow::llm {

Json ChatRequest::to_wire() const {
  Json messages_json = Json::array();
  for (const auto& m : messages) messages_json.push_back(Json{{"role", m.role}, {"content", m.content}});
  return Json{{"model", model}, {"messages", std::move(messages_json)}};
}

void ChatRequest::check() const {
  if (messages.empty()) throw Error("invalid-request", "chat request has no messages");
  if (messages.back().role != "user") throw Error("invalid-request", "last message must come from the user");
}

const std::string& ChatRequest::last_user_message() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == "user") return it->content;
  }
  throw Error("invalid-request", "chat request has no user message");
}

Json completion_document(const std::string& content) {
  return Json{{"choices", Json::array({Json{{"index", 0},
                                            {"message", Json{{"role", "assistant"}, {"content", content}}},
                                            {"finish_reason", "stop"}}})}};
}

std::string completion_content(const Json& raw) {
  const Json* content = nullptr;
  if (raw.is_object() && raw.contains("choices") && raw["choices"].is_array() && !raw["choices"].empty()) {
    const auto& first = raw["choices"][0];
    if (first.is_object() && first.contains("message") && first["message"].is_object() &&
        first["message"].contains("content")) {
      content = &first["message"]["content"];
    }
  }
  if (content == nullptr || !content->is_string()) {
    throw Error("malformed-response", "response has no choices[0].message.content", Json{{"raw", raw}});
  }
  return content->get<std::string>();
}

bool CassetteEntry::matches(std::string_view prompt) const {
  switch (type) {
    case MatchType::Exact: return prompt == pattern;
    case MatchType::Substring: return prompt.find(pattern) != std::string_view::npos;
    case MatchType::Regex: return boost::regex_search(prompt.begin(), prompt.end(), *regex);
  }
  return false;
}

namespace {

MatchType match_type_from(const std::string& s) {
  if (s == "exact") return MatchType::Exact;
  if (s == "substring") return MatchType::Substring;
  if (s == "regex") return MatchType::Regex;
  throw Error("cassette-invalid", "unknown match type '" + s + "'");
}

const char* match_type_name(MatchType t) {
  switch (t) {
    case MatchType::Exact: return "exact";
    case MatchType::Substring: return "substring";
    case MatchType::Regex: return "regex";
  }
  return "exact";
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : std::move(fallback);
}

}  // namespace

void Cassette::add(MatchType type, std::string pattern, std::string response) {
  CassetteEntry e{type, std::move(pattern), std::move(response), std::nullopt};
  if (type == MatchType::Regex) {
    try {
      e.regex.emplace(e.pattern, boost::regex::perl);
    } catch (const boost::regex_error& err) {
      throw Error("cassette-invalid", "entry pattern '" + e.pattern + "' does not compile: " + err.what());
    }
  }
  entries_.push_back(std::move(e));
}

Cassette Cassette::from_json(const Json& j) {
  try {
    Cassette c(j.value("name", std::string("unnamed")));
    for (const auto& entry : j.at("entries")) {
      const auto& match = entry.at("match");
      c.add(match_type_from(match.value("type", std::string("exact"))), match.at("pattern").get<std::string>(),
            entry.at("response").get<std::string>());
    }
    return c;
  } catch (const Json::exception& e) {
    throw Error("cassette-invalid", std::string("malformed cassette: ") + e.what());
  }
}

Cassette Cassette::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cassette-invalid", "cannot open cassette " + path.string());
  try {
    return from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw Error("cassette-invalid", "cassette " + path.string() + " is not JSON: " + e.what());
  }
}

const CassetteEntry* Cassette::lookup(std::string_view prompt) const {
  for (const auto& e : entries_) {
    if (e.matches(prompt)) return &e;
  }
  return nullptr;
}

Json Cassette::to_json() const {
  Json entries = Json::array();
  for (const auto& e : entries_) {
    entries.push_back(Json{{"match", Json{{"type", match_type_name(e.type)}, {"pattern", e.pattern}}},
                           {"response", e.response}});
  }
  return Json{{"name", name_}, {"entries", std::move(entries)}};
}

ChatResponse MockProvider::complete(const ChatRequest& request) {
  request.check();
  const auto& prompt = request.last_user_message();
  const auto* entry = cassette_.lookup(prompt);
  if (entry == nullptr) {
    throw Error("no-match", "cassette '" + cassette_.name() + "' has no entry matching the prompt",
                Json{{"cassette", cassette_.name()}, {"prompt", prompt}});
  }
  ChatResponse r;
  r.content = entry->response;
  r.raw = completion_document(entry->response);
  r.provider = name();
  r.from_cassette = true;
  return r;
}

ChatResponse OpenAICompatProvider::complete(const ChatRequest& request) {
  request.check();
  if (base_url_.empty()) throw Error("llm-config", "no base URL configured (JITFLOW_LLM_BASE_URL)");
  stdlib::HttpRequest http;
  auto base = base_url_;
  while (!base.empty() && base.back() == '/') base.pop_back();
  http.uri = base + "/v1/chat/completions";
  http.method = "POST";
  http.content_type = "application/json";
  http.headers.push_back(KeyValue{"Authorization", "Bearer " + api_key_});
  http.body = request.to_wire().dump();
  http.retries = retries_;
  auto ex = stdlib::http_request(http);
  if (ex.status == 401 || ex.status == 403) {
    throw Error("llm-auth", "provider rejected the API key (HTTP " + std::to_string(ex.status) + ")",
                Json{{"status", ex.status}, {"body", ex.body}});
  }
  if (ex.status < 200 || ex.status >= 300) {
    throw Error("llm-http", "provider answered HTTP " + std::to_string(ex.status),
                Json{{"status", ex.status}, {"body", ex.body}});
  }
  Json raw;
  try {
    raw = Json::parse(ex.body);
  } catch (const Json::parse_error&) {
    throw Error("malformed-response", "provider response is not JSON", Json{{"body", ex.body}});
  }
  ChatResponse r;
  r.content = completion_content(raw);
  r.raw = std::move(raw);
  r.provider = name();
  r.status_code = ex.status;
  return r;
}

ReplayProvider::ReplayProvider(std::filesystem::path log, std::unique_ptr<Provider> live)
    : log_(std::move(log)), live_(std::move(live)) {}

ChatResponse ReplayProvider::complete(const ChatRequest& request) {
  request.check();
  const auto& prompt = request.last_user_message();
  std::lock_guard lock(mutex_);
  auto recorded = read_log(log_);
  if (auto it = recorded.find(prompt); it != recorded.end()) {
    ChatResponse r;
    r.content = it->second;
    r.raw = completion_document(it->second);
    r.provider = name();
    r.from_cassette = true;
    return r;
  }
  if (!live_) {
    throw Error("no-match", "prompt is not recorded in " + log_.string(), Json{{"prompt", prompt}});
  }
  auto r = live_->complete(request);
  record(log_, request, r);
  return r;
}

void record(const std::filesystem::path& log, const ChatRequest& request, const ChatResponse& response) {
  using namespace std::chrono;
  Json line{{"prompt", request.last_user_message()},
            {"response", response.content},
            {"ts", duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count()},
            {"provider", response.provider}};
  if (log.has_parent_path()) std::filesystem::create_directories(log.parent_path());
  std::ofstream out(log, std::ios::app);
  out << line.dump() << "\n";
  if (!out) throw Error("io", "cannot append to exchange log " + log.string());
}

std::map<std::string, std::string> read_log(const std::filesystem::path& log) {
  std::map<std::string, std::string> out;
  std::ifstream in(log);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = Json::parse(line);
      out.insert_or_assign(j.at("prompt").get<std::string>(), j.at("response").get<std::string>());
    } catch (const Json::exception&) {
      throw Error("io", "malformed line in exchange log " + log.string());
    }
  }
  return out;
}

GatewayConfig GatewayConfig::from_env() {
  GatewayConfig c;
  c.provider = env_or("JITFLOW_LLM_PROVIDER", c.provider);
  c.base_url = env_or("JITFLOW_LLM_BASE_URL", "");
  c.api_key = env_or("JITFLOW_LLM_API_KEY", "");
  c.model = env_or("JITFLOW_LLM_MODEL", c.model);
  c.cassette_path = env_or("JITFLOW_CASSETTE", "");
  c.log_path = env_or("JITFLOW_LLM_LOG", "");
  return c;
}

Gateway::Gateway(std::shared_ptr<Provider> provider, GatewayConfig config)
    : provider_(std::move(provider)), config_(std::move(config)) {}

std::unique_ptr<Gateway> Gateway::from_config(const GatewayConfig& config) {
  std::shared_ptr<Provider> provider;
  if (config.provider == "mock") {
    if (config.cassette_path.empty()) throw Error("llm-config", "mock provider needs a cassette (JITFLOW_CASSETTE)");
    provider = std::make_shared<MockProvider>(Cassette::load(config.cassette_path));
  } else if (config.provider == "openai-compat") {
    provider = std::make_shared<OpenAICompatProvider>(config.base_url, config.api_key);
  } else if (config.provider == "replay") {
    if (config.log_path.empty()) throw Error("llm-config", "replay provider needs an exchange log (JITFLOW_LLM_LOG)");
    std::unique_ptr<Provider> live;
    if (!config.base_url.empty()) live = std::make_unique<OpenAICompatProvider>(config.base_url, config.api_key);
    provider = std::make_shared<ReplayProvider>(config.log_path, std::move(live));
  } else {
    throw Error("llm-config", "unknown provider '" + config.provider + "'");
  }
  return std::make_unique<Gateway>(std::move(provider), config);
}

ChatResponse Gateway::complete(ChatRequest request) {
  if (request.model.empty()) request.model = config_.model;
  if (!request.session_id) {
    auto r = provider_->complete(request);
    if (!config_.log_path.empty() && config_.provider != "replay") record(config_.log_path, request, r);
    return r;
  }
  std::mutex* session_lock = nullptr;
  {
    std::lock_guard lock(sessions_mutex_);
    auto& slot = session_locks_[*request.session_id];
    if (!slot) slot = std::make_unique<std::mutex>();
    session_lock = slot.get();
  }
  std::lock_guard session_guard(*session_lock);
  std::vector<ChatMessage> history;
  {
    std::lock_guard lock(sessions_mutex_);
    history = sessions_[*request.session_id];
  }
  ChatRequest full = request;
  full.messages = history;
  full.messages.insert(full.messages.end(), request.messages.begin(), request.messages.end());
  auto r = provider_->complete(full);
  if (!config_.log_path.empty() && config_.provider != "replay") record(config_.log_path, full, r);

  history.insert(history.end(), request.messages.begin(), request.messages.end());
  history.push_back(ChatMessage{"assistant", r.content});
  if (history.size() > config_.max_session_messages) {
    history.erase(history.begin(),
                  history.begin() + static_cast<std::ptrdiff_t>(history.size() - config_.max_session_messages));
  }
  std::lock_guard lock(sessions_mutex_);
  sessions_[*request.session_id] = std::move(history);
  return r;
}

ChatResponse Gateway::ask(const std::string& prompt) {
  ChatRequest req;
  req.messages.push_back(ChatMessage{"user", prompt});
  return complete(std::move(req));
}

std::vector<ChatMessage> Gateway::session(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? std::vector<ChatMessage>{} : it->second;
}

}  // namespace jitflow::llm
