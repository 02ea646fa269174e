#pragma once

#include <string>
#include <string_view>

#include "jitflow/types.hpp"

namespace jitflow::csv {

/// RFC 4180 with a header row and CRLF record separators.
///
/// Cell typing survives the round trip: unquoted fields are typed on read
/// (empty -> null, true/false -> boolean, numeric -> number, else text), so
/// text cells that would read back as something else are always quoted.
/// Integral numbers are written without a decimal point, other reals in
/// shortest round-trip form.
std::string write_table(const Table& table);

/// Accepts LF or CRLF line endings and "True"/"False" spellings. Throws
/// Error("csv-parse") on unbalanced quotes or ragged rows.
Table read_table(std::string_view text);

}  // namespace jitflow::csv
