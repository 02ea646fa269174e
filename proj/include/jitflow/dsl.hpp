#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jitflow/flow.hpp"

namespace jitflow {

enum class SourceOrigin { File, Llm, User };

struct DslSource {
  std::string text;
  SourceOrigin origin = SourceOrigin::User;
};

struct ParseDiagnostic {
  int line = 1;    // 1-based
  int column = 1;  // 1-based, in bytes
  std::string message;

  [[nodiscard]] std::string to_string() const;
};

struct DslParseResult {
  std::optional<FlowDefinition> flow;
  std::vector<ParseDiagnostic> diagnostics;  // empty on success

  [[nodiscard]] bool ok() const noexcept { return flow.has_value(); }
};

/// Parses the flow DSL:
///
///   flow "add" {
///     module c: Calculator { Operator = "+" } gated
///     connect a.Result -> c.Param1
///     extern input a.Input as "x"
///     extern output o.Result as "sum"
///   }
///
/// `# ...` comments run to end of line. An optional `version N` may follow
/// the flow name (default 1). Fails fast with a single diagnostic.
DslParseResult parse_dsl(const DslSource& src);
inline DslParseResult parse_dsl(std::string_view text) { return parse_dsl(DslSource{std::string(text)}); }

/// Canonical rendering; parse_dsl(render_dsl(f)) == f. Throws
/// Error("dsl-unrepresentable") for non-scalar params.
std::string render_dsl(const FlowDefinition& flow);

/// The grammar as shown to humans and LLMs.
std::string_view dsl_grammar();

}  // namespace jitflow
