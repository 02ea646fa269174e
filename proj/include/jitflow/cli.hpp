#pragma once

#include <iostream>
#include <string>
#include <vector>

#include "jitflow/types.hpp"

namespace jitflow {

/// Entry point of the jitflow command line tool; `args` excludes the program
/// name. Returns 0 on success, 1 on domain failures (invalid flow, failed or
/// rejected run, exhausted synthesis) and 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr,
            std::istream& in = std::cin);

/// `--input` literal: a JSON scalar when it parses as one, otherwise text.
Json parse_input_literal(const std::string& text);

}  // namespace jitflow
