#pragma once

#include <memory>
#include <optional>
#include <string>

#include "jitflow/catalog.hpp"
#include "jitflow/engine.hpp"
#include "jitflow/error.hpp"
#include "jitflow/llm.hpp"
#include "jitflow/store.hpp"

namespace jitflow {

struct RuntimeConfig {
  llm::GatewayConfig llm;
  InterpreterConfig interpreter;
  std::optional<std::filesystem::path> data_dir;
  std::chrono::milliseconds deadline{120'000};
  std::size_t max_parallel = 4;

  /// GatewayConfig::from_env plus JITFLOW_INTERPRETER, JITFLOW_PRELOAD
  /// (comma-separated modules) and JITFLOW_DATA_DIR.
  static RuntimeConfig from_env();
};

/// What a run needs besides its plan: the standard catalog, a flow store
/// holding the packaged flows, the LLM gateway and the ${...} variables the
/// packaged JIT flow reads. With provider "mock" and no base URL, a loopback
/// mock server is started on the configured cassette so the JIT flow's HTTP
/// request has somewhere to go.
class Runtime {
 public:
  explicit Runtime(RuntimeConfig config);
  ~Runtime();

  [[nodiscard]] const ModuleCatalog& catalog() const noexcept { return catalog_; }
  [[nodiscard]] FlowStore& flows() noexcept { return *flows_; }
  [[nodiscard]] const FlowStore& flows() const noexcept { return *flows_; }
  /// Throws the configuration error when the gateway could not be built.
  [[nodiscard]] llm::Gateway& gateway();
  [[nodiscard]] llm::Gateway* gateway_or_null() noexcept { return gateway_.get(); }
  [[nodiscard]] const RuntimeConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::map<std::string, std::string> variables() const;
  [[nodiscard]] ExecutionContext context(GatePolicy gates) const;
  [[nodiscard]] const llm::MockServer* mock_server() const noexcept { return mock_.get(); }

 private:
  RuntimeConfig config_;
  ModuleCatalog catalog_;
  std::unique_ptr<FlowStore> flows_;
  std::unique_ptr<llm::MockServer> mock_;
  std::unique_ptr<llm::Gateway> gateway_;
  std::optional<Error> gateway_error_;
};

}  // namespace jitflow
