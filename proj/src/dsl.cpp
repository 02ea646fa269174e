#include "jitflow/dsl.hpp"

#include <cctype>
#include <sstream>

#include "jitflow/error.hpp"

namespace jitflow {

std::string ParseDiagnostic::to_string() const {
  return std::to_string(line) + ":" + std::to_string(column) + ": " + message;
}

std::string_view dsl_grammar() {
  return R"(flow     := 'flow' STRING ('version' INT)? '{' item* '}'
item     := 'module' IDENT ':' IDENT ('{' (IDENT '=' literal)* '}')? ('gated')?
          | 'connect' endpoint '->' endpoint
          | 'extern' 'input' endpoint 'as' STRING
          | 'extern' 'output' endpoint 'as' STRING
endpoint := IDENT '.' IDENT
literal  := STRING | INT | REAL | 'true' | 'false'
comments run from '#' to end of line
)";
}

namespace {

enum class Tok { Ident, String, Number, LBrace, RBrace, Colon, Equals, Dot, Arrow, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;  // identifier name, decoded string, or number spelling
  int line = 1;
  int column = 1;
};

struct ParseFailure {
  ParseDiagnostic diag;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_space_and_comments();
    Token t;
    t.line = line_;
    t.column = column_;
    if (pos_ >= src_.size()) return t;
    char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        advance();
      }
      t.kind = Tok::Ident;
      t.text = std::string(src_.substr(start, pos_ - start));
      return t;
    }
    if (c == '"') return string_token(t);
    if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
      advance();
      advance();
      t.kind = Tok::Arrow;
      return t;
    }
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) return number_token(t);
    advance();
    switch (c) {
      case '{': t.kind = Tok::LBrace; return t;
      case '}': t.kind = Tok::RBrace; return t;
      case ':': t.kind = Tok::Colon; return t;
      case '=': t.kind = Tok::Equals; return t;
      case '.': t.kind = Tok::Dot; return t;
      default: break;
    }
    fail(t.line, t.column, std::string("unexpected character '") + c + "'");
  }

  [[noreturn]] static void fail(int line, int column, std::string message) {
    throw ParseFailure{{line, column, std::move(message)}};
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void skip_space_and_comments() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  Token string_token(Token t) {
    std::size_t start = pos_;
    advance();
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') fail(t.line, t.column, "unterminated string");
      if (src_[pos_] == '\\') {
        advance();
        if (pos_ >= src_.size()) fail(t.line, t.column, "unterminated string");
        advance();
        continue;
      }
      if (src_[pos_] == '"') {
        advance();
        break;
      }
      advance();
    }
    try {
      t.text = Json::parse(src_.substr(start, pos_ - start)).get<std::string>();
    } catch (const Json::exception&) {
      fail(t.line, t.column, "invalid string literal");
    }
    t.kind = Tok::String;
    return t;
  }

  Token number_token(Token t) {
    std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        advance();
        ++n;
      }
      return n;
    };
    if (src_[pos_] == '-') advance();
    if (digits() == 0) fail(t.line, t.column, "malformed number");
    if (pos_ < src_.size() && src_[pos_] == '.') {
      advance();
      if (digits() == 0) fail(t.line, t.column, "malformed number");
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      advance();
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
      if (digits() == 0) fail(t.line, t.column, "malformed number");
    }
    t.kind = Tok::Number;
    t.text = std::string(src_.substr(start, pos_ - start));
    return t;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : lexer_(src) { shift(); }

  FlowDefinition parse() {
    expect_keyword("flow");
    FlowDefinition flow;
    flow.name = expect(Tok::String, "flow name string").text;
    if (is_keyword("version")) {
      shift();
      auto tok = expect(Tok::Number, "version number");
      auto value = Json::parse(tok.text);
      if (!value.is_number_integer()) Lexer::fail(tok.line, tok.column, "version must be an integer");
      flow.version = value.get<std::int64_t>();
    }
    expect(Tok::LBrace, "'{'");
    while (cur_.kind != Tok::RBrace) {
      if (cur_.kind == Tok::End) Lexer::fail(cur_.line, cur_.column, "missing '}' at end of flow");
      item(flow);
    }
    shift();
    if (cur_.kind != Tok::End) Lexer::fail(cur_.line, cur_.column, "unexpected input after flow block");
    return flow;
  }

 private:
  void shift() { cur_ = lexer_.next(); }

  bool is_keyword(std::string_view kw) const { return cur_.kind == Tok::Ident && cur_.text == kw; }

  Token expect(Tok kind, std::string_view what) {
    if (cur_.kind != kind) Lexer::fail(cur_.line, cur_.column, "expected " + std::string(what) + found());
    auto t = cur_;
    shift();
    return t;
  }

  void expect_keyword(std::string_view kw) {
    if (!is_keyword(kw)) {
      Lexer::fail(cur_.line, cur_.column, "expected '" + std::string(kw) + "'" + found());
    }
    shift();
  }

  std::string found() const {
    switch (cur_.kind) {
      case Tok::End: return ", found end of input";
      case Tok::Ident: return ", found '" + cur_.text + "'";
      case Tok::String: return ", found string";
      case Tok::Number: return ", found number " + cur_.text;
      default: return ", found punctuation";
    }
  }

  Endpoint endpoint() {
    auto module = expect(Tok::Ident, "module id").text;
    expect(Tok::Dot, "'.'");
    auto port = expect(Tok::Ident, "port name").text;
    return {module, port};
  }

  Json literal() {
    if (cur_.kind == Tok::String) {
      Json v = cur_.text;
      shift();
      return v;
    }
    if (cur_.kind == Tok::Number) {
      Json v = Json::parse(cur_.text);
      shift();
      return v;
    }
    if (is_keyword("true") || is_keyword("false")) {
      Json v = cur_.text == "true";
      shift();
      return v;
    }
    Lexer::fail(cur_.line, cur_.column, "expected a literal" + found());
  }

  void item(FlowDefinition& flow) {
    auto start = cur_;
    if (is_keyword("module")) {
      shift();
      ModuleInstance m;
      m.id = expect(Tok::Ident, "module id").text;
      expect(Tok::Colon, "':'");
      m.kind = expect(Tok::Ident, "module kind").text;
      if (cur_.kind == Tok::LBrace) {
        shift();
        while (cur_.kind != Tok::RBrace) {
          auto name_tok = expect(Tok::Ident, "parameter name or '}'");
          expect(Tok::Equals, "'='");
          if (m.params.contains(name_tok.text)) {
            Lexer::fail(name_tok.line, name_tok.column, "duplicate parameter '" + name_tok.text + "'");
          }
          m.params[name_tok.text] = literal();
        }
        shift();
      }
      if (is_keyword("gated")) {
        shift();
        m.gated = true;
      }
      if (flow.find_module(m.id) != nullptr) {
        Lexer::fail(start.line, start.column, "duplicate module id '" + m.id + "'");
      }
      flow.modules.push_back(std::move(m));
    } else if (is_keyword("connect")) {
      shift();
      auto from = endpoint();
      expect(Tok::Arrow, "'->'");
      auto to = endpoint();
      flow.connections.push_back({from, to});
    } else if (is_keyword("extern")) {
      shift();
      bool input = is_keyword("input");
      if (!input && !is_keyword("output")) {
        Lexer::fail(cur_.line, cur_.column, "expected 'input' or 'output'" + found());
      }
      shift();
      auto ep = endpoint();
      expect_keyword("as");
      auto name_tok = expect(Tok::String, "external name string");
      if (name_tok.text.empty()) Lexer::fail(name_tok.line, name_tok.column, "empty external name");
      if (input) {
        for (const auto& e : flow.external_inputs) {
          if (e.name == name_tok.text) {
            Lexer::fail(name_tok.line, name_tok.column, "duplicate external input '" + name_tok.text + "'");
          }
        }
        flow.external_inputs.push_back({name_tok.text, ep});
      } else {
        for (const auto& e : flow.external_outputs) {
          if (e.name == name_tok.text) {
            Lexer::fail(name_tok.line, name_tok.column, "duplicate external output '" + name_tok.text + "'");
          }
        }
        flow.external_outputs.push_back({name_tok.text, ep});
      }
    } else {
      Lexer::fail(cur_.line, cur_.column, "expected 'module', 'connect', 'extern' or '}'" + found());
    }
  }

  Lexer lexer_;
  Token cur_;
};

std::string render_literal(const Json& v, const std::string& where) {
  if (v.is_string() || v.is_boolean() || v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return format_real(v.get<double>());
  throw Error("dsl-unrepresentable", where + " holds a " + v.type_name() + " literal; use the JSON form");
}

}  // namespace

DslParseResult parse_dsl(const DslSource& src) {
  DslParseResult result;
  try {
    result.flow = Parser(src.text).parse();
  } catch (const ParseFailure& f) {
    result.diagnostics.push_back(f.diag);
  }
  return result;
}

std::string render_dsl(const FlowDefinition& input) {
  const auto flow = canonicalize(input);
  std::ostringstream os;
  os << "flow " << Json(flow.name).dump();
  if (flow.version != 1) os << " version " << flow.version;
  os << " {\n";
  for (const auto& m : flow.modules) {
    os << "  module " << m.id << ": " << m.kind;
    if (!m.params.empty()) {
      os << " {";
      for (const auto& [name, value] : m.params.items()) {
        os << " " << name << " = " << render_literal(value, m.id + "." + name);
      }
      os << " }";
    }
    if (m.gated) os << " gated";
    os << "\n";
  }
  for (const auto& c : flow.connections) {
    os << "  connect " << c.from.to_string() << " -> " << c.to.to_string() << "\n";
  }
  for (const auto& e : flow.external_inputs) {
    os << "  extern input " << e.target.to_string() << " as " << Json(e.name).dump() << "\n";
  }
  for (const auto& e : flow.external_outputs) {
    os << "  extern output " << e.source.to_string() << " as " << Json(e.name).dump() << "\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace jitflow
