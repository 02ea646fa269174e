#include "jitflow/jit.hpp"

#include "jitflow/assets.hpp"
#include "jitflow/dsl.hpp"
#include "jitflow/error.hpp"
#include "jitflow/stdlib.hpp"

namespace jitflow::jit {

std::string extract_code(std::string_view response) {
  return stdlib::replace_regex(response, kFencePattern, kFenceReplacement);
}

Json CodegenResult::to_json() const {
  return Json{{"prompt", prompt}, {"raw", raw_response}, {"code", code}, {"statusCode", status_code}};
}

CodegenResult generate_code(const std::string& prompt, llm::Gateway& gateway, const std::string& prompt_suffix) {
  auto response = gateway.ask(prompt + prompt_suffix);
  CodegenResult r;
  r.prompt = prompt;
  r.raw_response = response.content;
  r.code = extract_code(response.content);
  r.status_code = response.status_code;
  return r;
}

FlowDefinition builtin_jit_flow() { return parse_flow_document(asset("jit-codegen.flow.json")); }

Json SynthesisResult::to_json() const {
  Json attempts_json = Json::array();
  for (const auto& a : attempts) {
    attempts_json.push_back(Json{{"response", a.response}, {"report", a.report.to_json()}});
  }
  return Json{{"prompt", prompt},
              {"flow", flow ? Json(flow_to_json(*flow)) : Json(nullptr)},
              {"report", report.to_json()},
              {"attemptCount", attempt_count()},
              {"attempts", std::move(attempts_json)}};
}

namespace {

void replace_token(std::string& text, std::string_view token, std::string_view value) {
  auto pos = text.find(token);
  if (pos == std::string::npos) throw Error("unknown-asset", "synthesis template lacks " + std::string(token));
  text.replace(pos, token.size(), value);
}

ValidationReport parse_failure(const std::string& message) {
  ValidationReport report;
  report.ok = false;
  report.issues.push_back(ValidationIssue{Severity::Error, "parse", "response", message});
  return report;
}

}  // namespace

std::string synthesis_prompt(const std::string& request, const ModuleCatalog& catalog, int attempt,
                             int max_attempts, const std::string& feedback) {
  std::string text(asset("synthesis-prompt.txt"));
  replace_token(text, "{{CATALOG}}", catalog.summary());
  replace_token(text, "{{GRAMMAR}}", dsl_grammar());
  replace_token(text, "{{EXAMPLE}}", asset("fewshot-add.flow"));
  replace_token(text, "{{REQUEST}}", request);
  replace_token(text, "{{FEEDBACK}}", feedback);
  replace_token(text, "{{ATTEMPT}}", std::to_string(attempt));
  replace_token(text, "{{MAX_ATTEMPTS}}", std::to_string(max_attempts));
  return text;
}

std::pair<std::optional<FlowDefinition>, ValidationReport> read_flow_answer(const std::string& answer,
                                                                           const ModuleCatalog& catalog,
                                                                           const FlowResolver* flows) {
  auto text = extract_code(answer);
  auto parsed = parse_dsl(DslSource{text, SourceOrigin::Llm});
  std::optional<FlowDefinition> flow = parsed.flow;
  std::string problem;
  if (!flow) {
    problem = "not valid flow DSL: " + parsed.diagnostics.front().to_string();
    auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
      try {
        flow = parse_flow_document(text);
      } catch (const Error& e) {
        problem = std::string("not valid flow JSON: ") + e.what();
      }
    }
  }
  if (!flow) return {std::nullopt, parse_failure(problem)};
  auto report = validate_flow(*flow, catalog, flows);
  return {report.ok ? flow : std::nullopt, report};
}

SynthesisResult synthesize_flow(const std::string& prompt, const ModuleCatalog& catalog, llm::Gateway& gateway,
                                int max_attempts, const FlowResolver* flows) {
  if (catalog.empty()) throw Error("invalid-argument", "module catalog is empty");
  max_attempts = std::max(1, max_attempts);
  SynthesisResult result;
  result.prompt = prompt;
  std::string feedback;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    SynthesisAttempt a;
    a.prompt = synthesis_prompt(prompt, catalog, attempt, max_attempts, feedback);
    a.response = gateway.ask(a.prompt).content;
    auto [flow, report] = read_flow_answer(a.response, catalog, flows);
    a.report = report;
    result.attempts.push_back(a);
    result.report = report;
    if (flow) {
      result.flow = std::move(flow);
      return result;
    }
    feedback = "Your previous answer was rejected.\nPrevious answer:\n" + extract_code(a.response) +
               "\nProblems:\n" + report.to_text() + "Fix every problem and answer again.\n";
  }
  return result;
}

}  // namespace jitflow::jit
