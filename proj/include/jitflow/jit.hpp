#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jitflow/catalog.hpp"
#include "jitflow/flow.hpp"
#include "jitflow/llm.hpp"
#include "jitflow/validate.hpp"

namespace jitflow::jit {

/// Id under which the packaged code generation flow is always resolvable.
inline constexpr const char* kCodegenFlowId = "jit-codegen";

/// Perl regex used both by extract_code and by the RegexReplace step of the
/// packaged flow: keeps the body of the first fenced block, trimmed.
inline constexpr std::string_view kFencePattern =
    R"(\A\s*(?:[\s\S]*?```[^\n]*\n\s*)?([\s\S]*?)\s*(?:```[\s\S]*)?\z)";
inline constexpr std::string_view kFenceReplacement = "$1";

/// Contents of the first ``` block without its language tag, or the whole
/// response when there is none; surrounding whitespace is trimmed.
std::string extract_code(std::string_view response);

struct CodegenResult {
  std::string prompt;
  std::string raw_response;
  std::string code;
  int status_code = 200;

  [[nodiscard]] Json to_json() const;
};

/// One user turn with `prompt` + `prompt_suffix`; gateway errors propagate.
CodegenResult generate_code(const std::string& prompt, llm::Gateway& gateway, const std::string& prompt_suffix = {});

/// The packaged flow: prompt -> chat payload -> POST -> content -> fence strip.
/// External input "Prompt"; outputs "StatusCode" and "Code". Its Text
/// params reference ${JITFLOW_LLM_BASE_URL}, ${JITFLOW_LLM_MODEL} and
/// ${JITFLOW_LLM_API_KEY}.
FlowDefinition builtin_jit_flow();

struct SynthesisAttempt {
  std::string prompt;
  std::string response;
  ValidationReport report;
};

struct SynthesisResult {
  std::string prompt;
  std::optional<FlowDefinition> flow;  // only when report.ok
  ValidationReport report;
  std::vector<SynthesisAttempt> attempts;

  [[nodiscard]] int attempt_count() const noexcept { return static_cast<int>(attempts.size()); }
  [[nodiscard]] Json to_json() const;
};

/// Fills the packaged synthesis prompt template. `feedback` carries the
/// previous answer's problems on repair attempts.
std::string synthesis_prompt(const std::string& request, const ModuleCatalog& catalog, int attempt,
                             int max_attempts, const std::string& feedback = {});

/// Parses a model answer as DSL, then as flow JSON. Parse failures come back
/// as a report with a single "parse" error.
std::pair<std::optional<FlowDefinition>, ValidationReport> read_flow_answer(const std::string& answer,
                                                                           const ModuleCatalog& catalog,
                                                                           const FlowResolver* flows = nullptr);

/// Prompt -> flow -> validate, re-prompting with diagnostics up to
/// `max_attempts` times. Throws Error("invalid-argument") on an empty
/// catalog; gateway errors propagate.
SynthesisResult synthesize_flow(const std::string& prompt, const ModuleCatalog& catalog, llm::Gateway& gateway,
                                int max_attempts = 3, const FlowResolver* flows = nullptr);

}  // namespace jitflow::jit
