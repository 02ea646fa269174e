#include "jitflow/stdlib.hpp"

#include <charconv>
#include <limits>
#include <random>
#include <regex>
#include <thread>

#include <boost/regex.hpp>
#include <httplib.h>

#include "jitflow/error.hpp"

namespace jitflow::stdlib {

Value eval_calculator(std::string_view op, const Value& a, const Value& b, CalcMode mode) {
  if (op != "+" && op != "-" && op != "*" && op != "/") {
    throw Error("invalid-operator", "unsupported operator '" + std::string(op) + "'");
  }
  if (mode == CalcMode::Real) {
    double x = coerce(a, types::Real()).as_real();
    double y = coerce(b, types::Real()).as_real();
    if (op == "+") return Value::real(x + y);
    if (op == "-") return Value::real(x - y);
    if (op == "*") return Value::real(x * y);
    if (y == 0.0) throw Error("division-by-zero", "division by zero");
    return Value::real(x / y);
  }
  std::int64_t x = a.as_int();
  std::int64_t y = b.as_int();
  std::int64_t r = 0;
  bool overflow = false;
  if (op == "+") {
    overflow = __builtin_add_overflow(x, y, &r);
  } else if (op == "-") {
    overflow = __builtin_sub_overflow(x, y, &r);
  } else if (op == "*") {
    overflow = __builtin_mul_overflow(x, y, &r);
  } else {
    if (y == 0) throw Error("division-by-zero", "division by zero");
    overflow = x == std::numeric_limits<std::int64_t>::min() && y == -1;
    if (!overflow) r = x / y;
  }
  if (overflow) {
    throw Error("overflow", std::to_string(x) + " " + std::string(op) + " " + std::to_string(y) + " overflows Int");
  }
  return Value::integer(r);
}

KeyValue make_key_value(std::string key, std::string value) {
  if (key.empty()) throw Error("empty-key", "key must not be empty");
  return KeyValue{std::move(key), std::move(value)};
}

std::string format_string(std::string_view tmpl, const std::vector<std::optional<std::string>>& args,
                          EscapeMode mode) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    char c = tmpl[i];
    if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
      out += '{';
      ++i;
    } else if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
      out += '}';
      ++i;
    } else if (c == '{') {
      auto close = tmpl.find('}', i);
      if (close == std::string_view::npos) throw Error("format", "unclosed '{' at offset " + std::to_string(i));
      auto name = tmpl.substr(i + 1, close - i - 1);
      std::size_t index = 0;
      auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), index);
      if (name.empty() || ec != std::errc() || ptr != name.data() + name.size()) {
        throw Error("format", "unknown placeholder {" + std::string(name) + "}");
      }
      if (index >= args.size() || !args[index]) {
        throw Error("format", "placeholder {" + std::string(name) + "} has no value");
      }
      if (mode == EscapeMode::Json) {
        auto quoted = Json(*args[index]).dump();
        out.append(quoted, 1, quoted.size() - 2);
      } else {
        out += *args[index];
      }
      i = close;
    } else if (c == '}') {
      throw Error("format", "unmatched '}' at offset " + std::to_string(i));
    } else {
      out += c;
    }
  }
  return out;
}

namespace {

struct PathStep {
  std::optional<std::string> key;
  std::size_t index = 0;
};

std::vector<PathStep> parse_path(std::string_view path) {
  auto invalid = [&](const std::string& why) -> Error {
    return Error("invalid-path", "invalid path '" + std::string(path) + "': " + why);
  };
  if (path.empty() || path[0] != '$') throw invalid("must start with $");
  std::vector<PathStep> steps;
  std::size_t i = 1;
  while (i < path.size()) {
    if (path[i] == '.') {
      std::size_t j = i + 1;
      while (j < path.size() && path[j] != '.' && path[j] != '[') ++j;
      if (j == i + 1) throw invalid("empty field name");
      steps.push_back(PathStep{std::string(path.substr(i + 1, j - i - 1))});
      i = j;
    } else if (path[i] == '[') {
      auto close = path.find(']', i);
      if (close == std::string_view::npos) throw invalid("unclosed [");
      auto inner = path.substr(i + 1, close - i - 1);
      if (inner.size() >= 2 && (inner.front() == '\'' || inner.front() == '"') && inner.back() == inner.front()) {
        steps.push_back(PathStep{std::string(inner.substr(1, inner.size() - 2))});
      } else {
        std::size_t n = 0;
        auto [ptr, ec] = std::from_chars(inner.data(), inner.data() + inner.size(), n);
        if (inner.empty() || ec != std::errc() || ptr != inner.data() + inner.size()) {
          throw invalid("index must be a non-negative integer");
        }
        steps.push_back(PathStep{std::nullopt, n});
      }
      i = close + 1;
    } else {
      throw invalid("unexpected '" + std::string(1, path[i]) + "'");
    }
  }
  return steps;
}

}  // namespace

Json select_jsonpath(const Json& document, std::string_view path) {
  const Json* cur = &document;
  std::string walked = "$";
  for (const auto& step : parse_path(path)) {
    if (step.key) {
      walked += "." + *step.key;
      if (!cur->is_object() || !cur->contains(*step.key)) {
        throw Error("path-not-found", "no value at " + walked, Json{{"path", std::string(path)}});
      }
      cur = &(*cur)[*step.key];
    } else {
      walked += "[" + std::to_string(step.index) + "]";
      if (!cur->is_array() || step.index >= cur->size()) {
        throw Error("path-not-found", "no value at " + walked, Json{{"path", std::string(path)}});
      }
      cur = &(*cur)[step.index];
    }
  }
  return *cur;
}

std::string query_jsonpath(std::string_view document, std::string_view path) {
  Json doc;
  try {
    doc = Json::parse(document);
  } catch (const Json::parse_error& e) {
    throw Error("json-parse", std::string("document is not JSON: ") + e.what());
  }
  auto result = select_jsonpath(doc, path);
  if (result.is_string()) return result.get<std::string>();
  return result.dump();
}

std::string replace_regex(std::string_view input, std::string_view pattern, std::string_view replacement) {
  boost::regex re;
  try {
    re.assign(pattern.begin(), pattern.end(), boost::regex::perl);
  } catch (const boost::regex_error& e) {
    throw Error("invalid-pattern", "invalid pattern '" + std::string(pattern) + "': " + e.what());
  }
  try {
    return boost::regex_replace(std::string(input), re, std::string(replacement),
                                boost::match_default | boost::format_perl);
  } catch (const std::runtime_error& e) {
    throw Error("invalid-pattern", std::string("regex evaluation failed: ") + e.what());
  }
}

namespace {

struct ParsedUri {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUri parse_uri(const std::string& uri) {
  static const std::regex re(R"(^(https?)://([^/?#\s]+)([^#\s]*)$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(uri, m, re)) throw Error("invalid-uri", "not an http(s) URI: '" + uri + "'");
  ParsedUri out;
  out.origin = m[1].str() + "://" + m[2].str();
  out.path = m[3].str();
  if (out.path.empty()) out.path = "/";
  if (out.path.front() == '?') out.path = "/" + out.path;
  return out;
}

bool sleep_interruptibly(std::chrono::milliseconds total, const std::stop_token& stop) {
  const auto until = std::chrono::steady_clock::now() + total;
  while (std::chrono::steady_clock::now() < until) {
    if (stop.stop_requested()) return false;
    std::this_thread::sleep_for(std::min<std::chrono::milliseconds>(
        std::chrono::milliseconds(20), std::chrono::duration_cast<std::chrono::milliseconds>(
                                           until - std::chrono::steady_clock::now()) +
                                           std::chrono::milliseconds(1)));
  }
  return !stop.stop_requested();
}

}  // namespace

HttpExchange http_request(const HttpRequest& request, std::stop_token stop) {
  auto uri = parse_uri(request.uri);
  httplib::Client client(uri.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout).count();
  client.set_connection_timeout(std::min<std::int64_t>(secs, 10), 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  client.set_follow_location(true);

  httplib::Request req;
  req.method = request.method;
  req.path = uri.path;
  for (const auto& h : request.headers) req.headers.emplace(h.key, h.value);
  if (!request.content_type.empty()) req.set_header("Content-Type", request.content_type);
  if (request.body) req.body = *request.body;

  std::mt19937 jitter(std::random_device{}());
  HttpExchange exchange;
  std::string last_error;
  auto backoff = request.backoff;
  for (int attempt = 0; attempt <= std::max(0, request.retries); ++attempt) {
    if (stop.stop_requested()) throw Error("cancelled", "request cancelled");
    if (attempt > 0) {
      auto extra = std::uniform_int_distribution<std::int64_t>(0, backoff.count() / 4 + 1)(jitter);
      if (!sleep_interruptibly(backoff + std::chrono::milliseconds(extra), stop)) {
        throw Error("cancelled", "request cancelled");
      }
      backoff *= 2;
    }
    ++exchange.attempts;
    auto res = client.send(req);
    if (res) {
      exchange.status = res->status;
      exchange.body = res->body;
      return exchange;
    }
    last_error = httplib::to_string(res.error());
  }
  throw Error("transport",
              request.method + " " + uri.origin + uri.path + " failed after " + std::to_string(exchange.attempts) +
                  " attempt(s): " + last_error,
              Json{{"attempts", exchange.attempts}});
}

}  // namespace jitflow::stdlib
