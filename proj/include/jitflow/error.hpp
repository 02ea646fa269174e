#pragma once

#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace jitflow {

/// Every failure raised by the library carries a short machine-readable code
/// ("missing-input", "division-by-zero", ...) next to the human message.
/// `detail` holds structured context such as captured stderr.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, nlohmann::json detail = nlohmann::json::object())
      : std::runtime_error(message), code_(std::move(code)), detail_(std::move(detail)) {}

  [[nodiscard]] const std::string& code() const noexcept { return code_; }
  [[nodiscard]] const nlohmann::json& detail() const noexcept { return detail_; }

 private:
  std::string code_;
  nlohmann::json detail_;
};

}  // namespace jitflow
