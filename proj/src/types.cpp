#include "jitflow/types.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "jitflow/error.hpp"

namespace jitflow {

namespace {

const char* tag_name(TypeTag tag) {
  switch (tag) {
    case TypeTag::Int: return "Int";
    case TypeTag::Real: return "Real";
    case TypeTag::Bool: return "Bool";
    case TypeTag::Text: return "Text";
    case TypeTag::Json: return "Json";
    case TypeTag::Table: return "Table";
    case TypeTag::KeyValue: return "KeyValue";
    case TypeTag::List: return "List";
  }
  return "?";
}

std::optional<TypeTag> tag_from_name(std::string_view name) {
  for (auto tag : {TypeTag::Int, TypeTag::Real, TypeTag::Bool, TypeTag::Text, TypeTag::Json,
                   TypeTag::Table, TypeTag::KeyValue, TypeTag::List}) {
    if (name == tag_name(tag)) return tag;
  }
  return std::nullopt;
}

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void mismatch(const PortType& expected, const std::string& got) {
  throw Error("type-mismatch", "expected " + expected.to_string() + ", got " + got);
}

}  // namespace

PortType PortType::of(TypeTag tag) {
  if (tag == TypeTag::List) throw Error("invalid-type", "List requires an element type");
  PortType t;
  t.tag_ = tag;
  return t;
}

PortType PortType::list_of(const PortType& element) {
  if (element.depth() + 1 > kMaxTypeDepth) {
    throw Error("invalid-type", "list nesting deeper than " + std::to_string(kMaxTypeDepth));
  }
  PortType t;
  t.tag_ = TypeTag::List;
  t.element_ = std::make_shared<const PortType>(element);
  return t;
}

const PortType& PortType::element() const {
  if (!element_) throw Error("invalid-type", to_string() + " has no element type");
  return *element_;
}

int PortType::depth() const noexcept { return element_ ? 1 + element_->depth() : 1; }

std::string PortType::to_string() const {
  if (tag_ == TypeTag::List) return "List<" + element_->to_string() + ">";
  return tag_name(tag_);
}

PortType PortType::parse(std::string_view text) {
  auto s = trim_view(text);
  if (s.starts_with("List<") && s.ends_with(">")) {
    return list_of(parse(s.substr(5, s.size() - 6)));
  }
  auto tag = tag_from_name(s);
  if (!tag || *tag == TypeTag::List) {
    throw Error("invalid-type", "unknown type '" + std::string(text) + "'");
  }
  return of(*tag);
}

bool operator==(const PortType& a, const PortType& b) {
  if (a.tag_ != b.tag_) return false;
  if (a.tag_ != TypeTag::List) return true;
  return *a.element_ == *b.element_;
}

Table::Table(std::vector<std::string> columns, std::vector<std::vector<Cell>> rows)
    : columns_(std::move(columns)), rows_(std::move(rows)) {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].empty()) throw Error("invalid-table", "empty column name");
    for (std::size_t j = 0; j < i; ++j) {
      if (columns_[i] == columns_[j]) {
        throw Error("invalid-table", "duplicate column name '" + columns_[i] + "'");
      }
    }
  }
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    if (rows_[r].size() != columns_.size()) {
      throw Error("invalid-table", "row " + std::to_string(r) + " has " +
                                       std::to_string(rows_[r].size()) + " cells, expected " +
                                       std::to_string(columns_.size()));
    }
  }
}

std::optional<std::size_t> Table::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i] == name) return i;
  }
  return std::nullopt;
}

Value Value::integer(std::int64_t v) { return {types::Int(), Payload(std::in_place_index<0>, v)}; }
Value Value::real(double v) { return {types::Real(), Payload(std::in_place_index<1>, v)}; }
Value Value::boolean(bool v) { return {types::Bool(), Payload(std::in_place_index<2>, v)}; }
Value Value::text(std::string v) {
  return {types::Text(), Payload(std::in_place_index<3>, std::move(v))};
}
Value Value::json(Json v) { return {types::JsonDoc(), Payload(std::in_place_index<4>, std::move(v))}; }
Value Value::table(Table v) { return {types::Table(), Payload(std::in_place_index<5>, std::move(v))}; }
Value Value::key_value(KeyValue v) {
  if (v.key.empty()) throw Error("empty-key", "key-value pair requires a non-empty key");
  return {types::KeyValue(), Payload(std::in_place_index<6>, std::move(v))};
}
Value Value::list(const PortType& element, List items) {
  for (const auto& item : items) {
    if (!(item.type() == element)) mismatch(element, item.type().to_string());
  }
  return {types::List(element), Payload(std::in_place_index<7>, std::move(items))};
}

namespace {
template <std::size_t I, typename V>
const auto& payload_at(const V& payload, const PortType& type, const char* wanted) {
  if (payload.index() != I) {
    throw Error("type-mismatch", std::string("value of type ") + type.to_string() +
                                     " accessed as " + wanted);
  }
  return std::get<I>(payload);
}
}  // namespace

std::int64_t Value::as_int() const { return payload_at<0>(payload_, type_, "Int"); }
double Value::as_real() const { return payload_at<1>(payload_, type_, "Real"); }
bool Value::as_bool() const { return payload_at<2>(payload_, type_, "Bool"); }
const std::string& Value::as_text() const { return payload_at<3>(payload_, type_, "Text"); }
const Json& Value::as_json() const { return payload_at<4>(payload_, type_, "Json"); }
const Table& Value::as_table() const { return payload_at<5>(payload_, type_, "Table"); }
const KeyValue& Value::as_key_value() const { return payload_at<6>(payload_, type_, "KeyValue"); }
const Value::List& Value::as_list() const { return payload_at<7>(payload_, type_, "List"); }

bool operator==(const Value& a, const Value& b) {
  return a.type_ == b.type_ && a.payload_ == b.payload_;
}

bool assignable(const PortType& src, const PortType& dst) {
  if (src == dst) return true;
  const auto s = src.tag();
  const auto d = dst.tag();
  if (s == TypeTag::Int && d == TypeTag::Real) return true;
  if (d == TypeTag::Text && (s == TypeTag::Int || s == TypeTag::Real || s == TypeTag::Bool)) {
    return true;
  }
  if (s == TypeTag::List && d == TypeTag::List) return assignable(src.element(), dst.element());
  return false;
}

std::string format_real(double v, bool integral_plain) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (integral_plain && v == std::trunc(v) && std::fabs(v) < 9.007199254740992e15) {
    return std::to_string(static_cast<std::int64_t>(v));
  }
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string out(buf, end);
  if (!integral_plain && out.find_first_of(".eE") == std::string::npos) out += ".0";
  return out;
}

std::string stringify_scalar(const Value& v) {
  switch (v.type().tag()) {
    case TypeTag::Int: return std::to_string(v.as_int());
    case TypeTag::Real: return format_real(v.as_real());
    case TypeTag::Bool: return v.as_bool() ? "true" : "false";
    case TypeTag::Text: return v.as_text();
    default: throw Error("type-mismatch", "cannot stringify " + v.type().to_string());
  }
}

Value coerce(const Value& v, const PortType& dst) {
  if (v.type() == dst) return v;
  if (!assignable(v.type(), dst)) mismatch(dst, v.type().to_string());
  if (dst.tag() == TypeTag::Real) return Value::real(static_cast<double>(v.as_int()));
  if (dst.tag() == TypeTag::Text) return Value::text(stringify_scalar(v));
  // List lifting
  Value::List items;
  items.reserve(v.as_list().size());
  for (const auto& item : v.as_list()) items.push_back(coerce(item, dst.element()));
  return Value::list(dst.element(), std::move(items));
}

Json cell_to_json(const Cell& c) {
  return std::visit(
      [](const auto& x) -> Json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return nullptr;
        } else if constexpr (std::is_same_v<T, double>) {
          if (x == std::trunc(x) && std::fabs(x) < 9.007199254740992e15) {
            return static_cast<std::int64_t>(x);
          }
          return x;
        } else {
          return x;
        }
      },
      c);
}

Cell cell_from_json(const Json& j) {
  if (j.is_null()) return std::monostate{};
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw Error("type-mismatch", "table cells must be scalar, got " + std::string(j.type_name()));
}

Json to_json(const Value& v) {
  switch (v.type().tag()) {
    case TypeTag::Int: return v.as_int();
    case TypeTag::Real: return v.as_real();
    case TypeTag::Bool: return v.as_bool();
    case TypeTag::Text: return v.as_text();
    case TypeTag::Json: return v.as_json();
    case TypeTag::KeyValue: return Json{{"key", v.as_key_value().key}, {"value", v.as_key_value().value}};
    case TypeTag::Table: {
      const auto& t = v.as_table();
      Json rows = Json::array();
      for (const auto& row : t.rows()) {
        Json r = Json::array();
        for (const auto& c : row) r.push_back(cell_to_json(c));
        rows.push_back(std::move(r));
      }
      return Json{{"columns", t.columns()}, {"rows", std::move(rows)}};
    }
    case TypeTag::List: {
      Json arr = Json::array();
      for (const auto& item : v.as_list()) arr.push_back(to_json(item));
      return arr;
    }
  }
  return nullptr;
}

Value value_from_json_scalar(const Json& j) {
  if (j.is_boolean()) return Value::boolean(j.get<bool>());
  if (j.is_number_integer()) return Value::integer(j.get<std::int64_t>());
  if (j.is_number_float()) return Value::real(j.get<double>());
  if (j.is_string()) return Value::text(j.get<std::string>());
  throw Error("type-mismatch", std::string("expected a JSON scalar, got ") + j.type_name());
}

Value value_from_json(const Json& j, const PortType& type) {
  switch (type.tag()) {
    case TypeTag::Int:
      if (!j.is_number_integer()) mismatch(type, j.dump());
      return Value::integer(j.get<std::int64_t>());
    case TypeTag::Real:
      if (!j.is_number()) mismatch(type, j.dump());
      return Value::real(j.get<double>());
    case TypeTag::Bool:
      if (!j.is_boolean()) mismatch(type, j.dump());
      return Value::boolean(j.get<bool>());
    case TypeTag::Text:
      if (j.is_string()) return Value::text(j.get<std::string>());
      if (j.is_number() || j.is_boolean()) return coerce(value_from_json_scalar(j), type);
      mismatch(type, j.dump());
    case TypeTag::Json:
      return Value::json(j);
    case TypeTag::KeyValue:
      if (!j.is_object() || !j.contains("key") || !j["key"].is_string()) mismatch(type, j.dump());
      return Value::key_value({j["key"].get<std::string>(), j.value("value", std::string{})});
    case TypeTag::Table: {
      if (!j.is_object() || !j.contains("columns") || !j.contains("rows")) mismatch(type, j.dump());
      std::vector<std::string> columns;
      for (const auto& c : j["columns"]) {
        if (!c.is_string()) mismatch(type, j.dump());
        columns.push_back(c.get<std::string>());
      }
      std::vector<std::vector<Cell>> rows;
      for (const auto& r : j["rows"]) {
        if (!r.is_array()) mismatch(type, j.dump());
        std::vector<Cell> row;
        for (const auto& c : r) row.push_back(cell_from_json(c));
        rows.push_back(std::move(row));
      }
      return Value::table(Table(std::move(columns), std::move(rows)));
    }
    case TypeTag::List: {
      if (!j.is_array()) mismatch(type, j.dump());
      Value::List items;
      for (const auto& e : j) items.push_back(value_from_json(e, type.element()));
      return Value::list(type.element(), std::move(items));
    }
  }
  mismatch(type, j.dump());
}

}  // namespace jitflow
