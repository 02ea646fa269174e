#include <gtest/gtest.h>

#include "jitflow/dsl.hpp"
#include "jitflow/error.hpp"
#include "jitflow/jit.hpp"
#include "jitflow/stdlib.hpp"
#include "jitflow/store.hpp"
#include "jitflow/validate.hpp"
#include "support.hpp"

using namespace jitflow;

namespace {

const ModuleCatalog& catalog() {
  static const ModuleCatalog c = standard_catalog();
  return c;
}

FlowDefinition dsl(const std::string& text) {
  auto r = parse_dsl(text);
  if (!r.ok()) throw std::runtime_error(r.diagnostics.front().to_string());
  return *r.flow;
}

}  // namespace

TEST(Validate, SeededInvalidFlowsReportExactlyOneCode) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"unknown-kind.flow", issue::kUnknownKind},
      {"type-mismatch.flow", issue::kTypeMismatch},
      {"cycle.flow", issue::kCycle},
      {"fan-in.flow", issue::kFanIn},
      {"unbound-input.flow", issue::kMissingInput}};
  for (const auto& [file, code] : cases) {
    auto report = validate_flow(testkit::fixture_flow("invalid/" + file), catalog());
    EXPECT_FALSE(report.ok) << file;
    EXPECT_EQ(report.error_codes(), std::vector<std::string>{code}) << file << "\n" << report.to_text();
  }
}

TEST(Validate, FixtureFlowsAreValid) {
  FlowStore store;
  EXPECT_TRUE(validate_flow(testkit::fixture_flow("add.flow"), catalog()).ok);
  auto jit = validate_flow(jit::builtin_jit_flow(), catalog(), &store);
  EXPECT_TRUE(jit.ok) << jit.to_text();
  for (const auto* name : {"jit-arithmetic.flow", "primality.flow", "primality-int.flow", "datagen.flow",
                           "duplicates.flow"}) {
    auto r = validate_flow(testkit::fixture_flow(name), catalog(), &store);
    EXPECT_TRUE(r.ok) << name << "\n" << r.to_text();
  }
}

TEST(Validate, RandomValidFlowsValidate) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    auto f = testkit::random_valid_flow(rng);
    auto r = validate_flow(f, catalog());
    ASSERT_TRUE(r.ok) << r.to_text();
  }
}

TEST(Validate, ParamProblems) {
  auto r = validate_flow(dsl(R"(flow "p" {
    module c: Calculator { Operator = "%" Colour = "red" }
    module k: KeyValuePair
    module x: ExternalIntInput
    connect x.Result -> c.Param1
    connect x.Result -> c.Param2
    extern input x.Input as "x"
  })"),
                         catalog());
  EXPECT_TRUE(r.has_error(issue::kInvalidParam) || r.has_error(issue::kUnknownParam)) << r.to_text();
  EXPECT_TRUE(r.has_error(issue::kMissingParam)) << r.to_text();
}

TEST(Validate, UnknownPortsAndModules) {
  auto r = validate_flow(dsl(R"(flow "p" {
    module x: ExternalIntInput
    module o: ExternalIntOutput
    connect x.Nope -> o.Input
    connect ghost.Result -> o.Input
    extern input x.Input as "x"
    extern output o.Result as "o"
  })"),
                         catalog());
  EXPECT_TRUE(r.has_error(issue::kUnknownPort)) << r.to_text();
  EXPECT_TRUE(r.has_error(issue::kUnknownModule)) << r.to_text();
}

TEST(Validate, BindingAndConnectionOnSameInputIsFanIn) {
  auto r = validate_flow(dsl(R"(flow "p" {
    module x: ExternalIntInput
    module y: ExternalIntInput
    module c: Calculator
    connect x.Result -> c.Param1
    connect y.Result -> c.Param2
    extern input x.Input as "x"
    extern input y.Input as "y"
    extern input c.Param1 as "z"
  })"),
                         catalog());
  EXPECT_TRUE(r.has_error(issue::kFanIn)) << r.to_text();
}

TEST(Validate, RealModeCalculatorRejectsIntOutputSink) {
  auto r = validate_flow(dsl(R"(flow "p" {
    module x: ExternalIntInput
    module c: Calculator { Mode = "Real" }
    module o: ExternalIntOutput
    connect x.Result -> c.Param1
    connect x.Result -> c.Param2
    connect c.Result -> o.Input
    extern input x.Input as "x"
    extern output o.Result as "o"
  })"),
                         catalog());
  EXPECT_EQ(r.error_codes(), std::vector<std::string>{issue::kTypeMismatch}) << r.to_text();
}

TEST(Validate, AppReferenceResolution) {
  FlowStore store;
  store.put(testkit::fixture_flow("add.flow"), "add");
  auto ok = validate_flow(dsl(R"(flow "outer" {
    module a: ExternalIntInput
    module r: AppReference { FlowId = "add" }
    module o: ExternalIntOutput
    connect a.Result -> r.x
    connect a.Result -> r.y
    connect r.sum -> o.Input
    extern input a.Input as "a"
    extern output o.Result as "o"
  })"),
                          catalog(), &store);
  EXPECT_TRUE(ok.ok) << ok.to_text();
  auto missing = validate_flow(dsl(R"(flow "outer" { module r: AppReference { FlowId = "nope" } })"), catalog(), &store);
  EXPECT_TRUE(missing.has_error(issue::kUnknownFlow)) << missing.to_text();
}

TEST(Validate, NestingDepthIsBounded) {
  FlowStore store;
  store.put(testkit::fixture_flow("add.flow"), "level0");
  for (int i = 1; i <= kMaxNesting + 1; ++i) {
    auto f = dsl("flow \"l\" {\n module a: ExternalIntInput\n module b: ExternalIntInput\n"
                 " module r: AppReference { FlowId = \"level" + std::to_string(i - 1) + "\" }\n"
                 " module o: ExternalIntOutput\n connect a.Result -> r.x\n connect b.Result -> r.y\n"
                 " connect r.sum -> o.Input\n extern input a.Input as \"x\"\n extern input b.Input as \"y\"\n"
                 " extern output o.Result as \"sum\"\n}");
    store.put(f, "level" + std::to_string(i));
  }
  auto at_limit = validate_flow(*store.find_flow("level" + std::to_string(kMaxNesting - 1)), catalog(), &store);
  EXPECT_TRUE(at_limit.ok) << at_limit.to_text();
  auto beyond = validate_flow(*store.find_flow("level" + std::to_string(kMaxNesting + 1)), catalog(), &store);
  EXPECT_FALSE(beyond.ok);
  EXPECT_TRUE(beyond.has_error(issue::kDepthExceeded) || beyond.has_error(issue::kInvalidReference))
      << beyond.to_text();
}

TEST(Validate, TopologicalOrder) {
  auto order = topological_order(testkit::fixture_flow("add.flow"));
  auto pos = [&](const std::string& id) { return std::find(order.begin(), order.end(), id) - order.begin(); };
  EXPECT_LT(pos("x"), pos("add"));
  EXPECT_LT(pos("add"), pos("sum"));
  EXPECT_THROW(topological_order(testkit::fixture_flow("invalid/cycle.flow")), Error);
}
