#include "jitflow/runtime.hpp"

#include <cstdlib>
#include <sstream>

#include "jitflow/error.hpp"
#include "jitflow/stdlib.hpp"

namespace jitflow {

RuntimeConfig RuntimeConfig::from_env() {
  RuntimeConfig c;
  c.llm = llm::GatewayConfig::from_env();
  if (const char* interp = std::getenv("JITFLOW_INTERPRETER"); interp != nullptr && *interp != '\0') {
    c.interpreter.command = interp;
  }
  if (const char* preload = std::getenv("JITFLOW_PRELOAD"); preload != nullptr) {
    std::istringstream names(preload);
    for (std::string name; std::getline(names, name, ',');) {
      if (!name.empty()) c.interpreter.preload.push_back(name);
    }
  }
  if (const char* dir = std::getenv("JITFLOW_DATA_DIR"); dir != nullptr && *dir != '\0') c.data_dir = dir;
  return c;
}

Runtime::Runtime(RuntimeConfig config) : config_(std::move(config)), catalog_(standard_catalog()) {
  flows_ = std::make_unique<FlowStore>(config_.data_dir);
  try {
    if (config_.llm.provider == "mock" && config_.llm.base_url.empty() && !config_.llm.cassette_path.empty()) {
      mock_ = llm::serve_mock(llm::Cassette::load(config_.llm.cassette_path));
      config_.llm.base_url = mock_->base_url();
    }
    gateway_ = llm::Gateway::from_config(config_.llm);
  } catch (const Error& e) {
    gateway_error_ = e;
  }
}

Runtime::~Runtime() = default;

llm::Gateway& Runtime::gateway() {
  if (!gateway_) throw gateway_error_ ? *gateway_error_ : Error("llm-config", "no LLM gateway configured");
  return *gateway_;
}

std::map<std::string, std::string> Runtime::variables() const {
  return {{"JITFLOW_LLM_BASE_URL", config_.llm.base_url},
          {"JITFLOW_LLM_MODEL", config_.llm.model},
          {"JITFLOW_LLM_API_KEY", config_.llm.api_key}};
}

ExecutionContext Runtime::context(GatePolicy gates) const {
  ExecutionContext ctx;
  ctx.catalog = &catalog_;
  ctx.flows = flows_.get();
  ctx.gateway = gateway_.get();
  ctx.interpreter = config_.interpreter;
  ctx.gate_policy = gates;
  ctx.deadline = config_.deadline;
  ctx.max_parallel = config_.max_parallel;
  ctx.variables = variables();
  return ctx;
}

}  // namespace jitflow
