#include "jitflow/csv.hpp"

#include <charconv>
#include <cmath>
#include <regex>

#include "jitflow/error.hpp"

namespace jitflow::csv {

namespace {

const std::regex& number_pattern() {
  static const std::regex re(R"(-?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)");
  return re;
}

std::optional<Cell> typed_cell(std::string_view field) {
  if (field.empty()) return Cell{std::monostate{}};
  if (field == "true" || field == "True" || field == "TRUE") return Cell{true};
  if (field == "false" || field == "False" || field == "FALSE") return Cell{false};
  if (std::regex_match(field.begin(), field.end(), number_pattern())) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec == std::errc() && ptr == field.data() + field.size() && std::isfinite(v)) return Cell{v};
  }
  return std::nullopt;
}

bool needs_quotes(const std::string& text) {
  if (text.find_first_of(",\"\r\n") != std::string::npos) return true;
  return typed_cell(text).has_value();
}

void write_text(std::string& out, const std::string& text, bool force_quotes) {
  if (!force_quotes && !needs_quotes(text)) {
    out += text;
    return;
  }
  out += '"';
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

struct Field {
  std::string text;
  bool quoted = false;
};

std::vector<std::vector<Field>> split_records(std::string_view text) {
  std::vector<std::vector<Field>> records;
  std::vector<Field> record;
  Field field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field = Field{};
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };
  while (i < text.size()) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.text += '"';
          i += 2;
          continue;
        }
        in_quotes = false;
        ++i;
        if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          throw Error("csv-parse", "unexpected character after closing quote at byte " + std::to_string(i));
        }
        continue;
      }
      field.text += c;
      ++i;
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field.quoted = true;
      field_started = true;
      ++i;
      continue;
    }
    if (c == ',') {
      end_field();
      ++i;
      continue;
    }
    if (c == '\r' || c == '\n') {
      end_record();
      i += (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ? 2 : 1;
      continue;
    }
    field.text += c;
    field_started = true;
    ++i;
  }
  if (in_quotes) throw Error("csv-parse", "unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  return records;
}

}  // namespace

std::string write_table(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns().size(); ++i) {
    if (i) out += ',';
    write_text(out, table.columns()[i], false);
  }
  out += "\r\n";
  for (const auto& row : table.rows()) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
            } else if constexpr (std::is_same_v<T, bool>) {
              out += v ? "true" : "false";
            } else if constexpr (std::is_same_v<T, double>) {
              out += format_real(v, true);
            } else {
              // Unquoted empty reads back as null.
              write_text(out, v, v.empty());
            }
          },
          row[i]);
    }
    out += "\r\n";
  }
  return out;
}

Table read_table(std::string_view text) {
  auto records = split_records(text);
  if (records.empty()) return Table{};
  const auto& header = records.front();
  if (header.size() == 1 && !header[0].quoted && header[0].text.empty()) return Table{};  // zero columns
  std::vector<std::string> columns;
  for (auto& f : records.front()) columns.push_back(std::move(f.text));
  std::vector<std::vector<Cell>> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    auto& rec = records[r];
    if (rec.size() == 1 && !rec[0].quoted && rec[0].text.empty() && columns.size() != 1) continue;
    if (rec.size() != columns.size()) {
      throw Error("csv-parse", "record " + std::to_string(r) + " has " + std::to_string(rec.size()) +
                                   " fields, header has " + std::to_string(columns.size()));
    }
    std::vector<Cell> row;
    row.reserve(rec.size());
    for (auto& f : rec) {
      if (f.quoted) {
        row.emplace_back(std::move(f.text));
      } else if (auto typed = typed_cell(f.text)) {
        row.push_back(*typed);
      } else {
        row.emplace_back(std::move(f.text));
      }
    }
    rows.push_back(std::move(row));
  }
  try {
    return Table(std::move(columns), std::move(rows));
  } catch (const Error& e) {
    throw Error("csv-parse", e.what());
  }
}

}  // namespace jitflow::csv
