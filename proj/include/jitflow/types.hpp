#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace jitflow {

using Json = nlohmann::json;

enum class TypeTag { Int, Real, Bool, Text, Json, Table, KeyValue, List };

inline constexpr int kMaxTypeDepth = 3;

/// Type of a port or value. `element` is set exactly when tag == List.
class PortType {
 public:
  PortType() = default;
  static PortType of(TypeTag tag);  // scalar and compound non-list tags
  static PortType list_of(const PortType& element);

  [[nodiscard]] TypeTag tag() const noexcept { return tag_; }
  [[nodiscard]] bool is_list() const noexcept { return tag_ == TypeTag::List; }
  [[nodiscard]] const PortType& element() const;
  /// 1 for non-list types, 1 + element depth for lists.
  [[nodiscard]] int depth() const noexcept;

  /// "Int", "List<Real>", ...
  [[nodiscard]] std::string to_string() const;
  static PortType parse(std::string_view text);

  friend bool operator==(const PortType& a, const PortType& b);

 private:
  TypeTag tag_ = TypeTag::Text;
  std::shared_ptr<const PortType> element_;
};

namespace types {
inline PortType Int() { return PortType::of(TypeTag::Int); }
inline PortType Real() { return PortType::of(TypeTag::Real); }
inline PortType Bool() { return PortType::of(TypeTag::Bool); }
inline PortType Text() { return PortType::of(TypeTag::Text); }
inline PortType JsonDoc() { return PortType::of(TypeTag::Json); }
inline PortType Table() { return PortType::of(TypeTag::Table); }
inline PortType KeyValue() { return PortType::of(TypeTag::KeyValue); }
inline PortType List(const PortType& element) { return PortType::list_of(element); }
}  // namespace types

/// A table cell: null, text, number or boolean.
using Cell = std::variant<std::monostate, std::string, double, bool>;

class Table {
 public:
  Table() = default;
  /// Throws Error("invalid-table") when the invariants do not hold.
  Table(std::vector<std::string> columns, std::vector<std::vector<Cell>> rows);

  [[nodiscard]] const std::vector<std::string>& columns() const noexcept { return columns_; }
  [[nodiscard]] const std::vector<std::vector<Cell>>& rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t row_count() const noexcept { return rows_.size(); }
  [[nodiscard]] std::optional<std::size_t> column_index(std::string_view name) const;

  friend bool operator==(const Table&, const Table&) = default;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

struct KeyValue {
  std::string key;
  std::string value;

  friend bool operator==(const KeyValue&, const KeyValue&) = default;
};

/// Tagged runtime datum carried on connections.
class Value {
 public:
  using List = std::vector<Value>;

  static Value integer(std::int64_t v);
  static Value real(double v);
  static Value boolean(bool v);
  static Value text(std::string v);
  static Value json(Json v);
  static Value table(Table v);
  static Value key_value(KeyValue v);
  /// Every element must have type `element`.
  static Value list(const PortType& element, List items);

  [[nodiscard]] const PortType& type() const noexcept { return type_; }

  [[nodiscard]] std::int64_t as_int() const;
  [[nodiscard]] double as_real() const;
  [[nodiscard]] bool as_bool() const;
  [[nodiscard]] const std::string& as_text() const;
  [[nodiscard]] const Json& as_json() const;
  [[nodiscard]] const Table& as_table() const;
  [[nodiscard]] const KeyValue& as_key_value() const;
  [[nodiscard]] const List& as_list() const;

  friend bool operator==(const Value& a, const Value& b);

 private:
  using Payload = std::variant<std::int64_t, double, bool, std::string, Json, Table, KeyValue, List>;
  Value(PortType type, Payload payload) : type_(std::move(type)), payload_(std::move(payload)) {}

  PortType type_;
  Payload payload_;
};

/// The coercion lattice: identity, Int->Real, {Int,Real,Bool}->Text, and
/// covariant List lifting.
bool assignable(const PortType& src, const PortType& dst);

/// Converts `v` to `dst`; throws Error("type-mismatch") unless
/// assignable(v.type(), dst).
Value coerce(const Value& v, const PortType& dst);

/// Shortest round-trip text for a double; integral values keep no decimals
/// only when `integral_plain` is set.
std::string format_real(double v, bool integral_plain = false);

/// Text rendering used by the scalar->Text coercion.
std::string stringify_scalar(const Value& v);

/// Plain JSON view of a value (Int -> number, Table -> {columns, rows}, ...).
Json to_json(const Value& v);
/// Inverse of to_json for a known target type; applies assignable coercions.
Value value_from_json(const Json& j, const PortType& type);
/// Natural type of a JSON scalar: integer -> Int, float -> Real, bool -> Bool,
/// string -> Text. Throws for anything else.
Value value_from_json_scalar(const Json& j);

Json cell_to_json(const Cell& c);
Cell cell_from_json(const Json& j);

}  // namespace jitflow
