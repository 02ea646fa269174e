#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace jitflow {

/// Byte content of a file shipped under assets/ and compiled into the
/// library. Throws Error("unknown-asset").
std::string_view asset(std::string_view name);
std::vector<std::string> asset_names();

}  // namespace jitflow
