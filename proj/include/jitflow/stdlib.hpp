#pragma once

#include <chrono>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "jitflow/catalog.hpp"
#include "jitflow/types.hpp"

namespace jitflow {

/// The built-in module kinds: external inputs and outputs, Calculator,
/// KeyValuePair, StringFormatter, WebClientRobust, JSONPathQuery,
/// RegexReplace, CodeFunction, CodeScript, CodeTable and AppReference.
ModuleCatalog standard_catalog();
void register_standard_modules(ModuleCatalog& catalog);

namespace stdlib {

enum class CalcMode { Int, Real };

/// `op` is one of + - * /. Int mode truncates division toward zero.
/// Throws Error("division-by-zero"), Error("overflow") or
/// Error("invalid-operator").
Value eval_calculator(std::string_view op, const Value& a, const Value& b, CalcMode mode);

/// Throws Error("empty-key").
KeyValue make_key_value(std::string key, std::string value);

enum class EscapeMode { None, Json };

/// Substitutes {0}..{9}; "{{" and "}}" are literal braces. With
/// EscapeMode::Json substituted values are escaped for a JSON string body.
/// Throws Error("format") for malformed templates and unknown or unbound
/// placeholders.
std::string format_string(std::string_view tmpl, const std::vector<std::optional<std::string>>& args,
                          EscapeMode mode = EscapeMode::None);

/// Evaluates a path made of `$`, `.field`, `['field']` and `[n]` steps.
/// String results are returned bare, everything else as compact JSON.
/// Throws Error("json-parse"), Error("invalid-path") or
/// Error("path-not-found").
std::string query_jsonpath(std::string_view document, std::string_view path);
Json select_jsonpath(const Json& document, std::string_view path);

/// Perl-syntax regex replace of every match; `$1` style group references.
/// Throws Error("invalid-pattern").
std::string replace_regex(std::string_view input, std::string_view pattern, std::string_view replacement);

struct HttpRequest {
  std::string uri;
  std::string method = "GET";
  std::string content_type;
  std::vector<KeyValue> headers;
  std::optional<std::string> body;
  int retries = 3;
  std::chrono::milliseconds backoff{500};
  std::chrono::milliseconds timeout{60'000};
};

struct HttpExchange {
  int status = 0;
  std::string body;
  int attempts = 0;
};

/// Non-2xx statuses are returned as data; transport failures are retried
/// `retries` times with doubling backoff plus jitter, then throw
/// Error("transport"). Throws Error("invalid-uri") and Error("cancelled").
HttpExchange http_request(const HttpRequest& request, std::stop_token stop = {});

}  // namespace stdlib
}  // namespace jitflow
