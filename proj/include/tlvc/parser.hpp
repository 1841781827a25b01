#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tlvc/error.hpp"
#include "tlvc/logic.hpp"

namespace tlvc {

enum class TokenKind {
  kIdent, kTrue, kFalse, kNot, kAnd, kOr, kNext, kFinally, kGlobally, kUntil, kLParen, kRParen, kEof
};

inline const char* token_name(TokenKind k) {
  switch (k) {
    case TokenKind::kIdent: return "IDENT";
    case TokenKind::kTrue: return "TRUE";
    case TokenKind::kFalse: return "FALSE";
    case TokenKind::kNot: return "NOT";
    case TokenKind::kAnd: return "AND";
    case TokenKind::kOr: return "OR";
    case TokenKind::kNext: return "NEXT";
    case TokenKind::kFinally: return "FINALLY";
    case TokenKind::kGlobally: return "GLOBALLY";
    case TokenKind::kUntil: return "UNTIL";
    case TokenKind::kLParen: return "LPAREN";
    case TokenKind::kRParen: return "RPAREN";
    case TokenKind::kEof: return "EOF";
  }
  return "?";
}

struct Span {
  std::size_t offset = 0;
  std::size_t length = 0;
  bool operator==(const Span&) const = default;
};

struct Token {
  TokenKind kind;
  std::string lexeme;
  Span span;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, Span span, std::vector<TokenKind> expected = {})
      : Error(message), span_(span), expected_(std::move(expected)) {}
  const Span& span() const { return span_; }
  const std::vector<TokenKind>& expected() const { return expected_; }

 private:
  Span span_;
  std::vector<TokenKind> expected_;
};

namespace detail {

inline bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

inline TokenKind keyword_or_ident(std::string_view w) {
  if (w == "not") return TokenKind::kNot;
  if (w == "and") return TokenKind::kAnd;
  if (w == "or") return TokenKind::kOr;
  if (w == "X") return TokenKind::kNext;
  if (w == "F") return TokenKind::kFinally;
  if (w == "G") return TokenKind::kGlobally;
  if (w == "U") return TokenKind::kUntil;
  if (w == "true") return TokenKind::kTrue;
  if (w == "false") return TokenKind::kFalse;
  return TokenKind::kIdent;
}

// Byte length of the UTF-8 sequence starting with c (1 for invalid lead bytes).
inline std::size_t utf8_length(unsigned char c) {
  if (c >= 0xF0) return 4;
  if (c >= 0xE0) return 3;
  if (c >= 0xC0) return 2;
  return 1;
}

}  // namespace detail

inline std::vector<Token> lex(std::string_view input) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < input.size()) {
    char c = input[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    auto single = [&](TokenKind k) {
      out.push_back({k, std::string(1, c), {i, 1}});
      ++i;
    };
    switch (c) {
      case '!': single(TokenKind::kNot); continue;
      case '&': single(TokenKind::kAnd); continue;
      case '|': single(TokenKind::kOr); continue;
      case '(': single(TokenKind::kLParen); continue;
      case ')': single(TokenKind::kRParen); continue;
      default: break;
    }
    if (detail::ident_start(c)) {
      std::size_t j = i + 1;
      while (j < input.size() && detail::ident_char(input[j])) ++j;
      std::string_view word = input.substr(i, j - i);
      out.push_back({detail::keyword_or_ident(word), std::string(word), {i, j - i}});
      i = j;
      continue;
    }
    std::size_t len = std::min(detail::utf8_length(static_cast<unsigned char>(c)), input.size() - i);
    throw ParseError("unexpected character '" + std::string(input.substr(i, len)) + "'", {i, len});
  }
  out.push_back({TokenKind::kEof, "", {input.size(), 0}});
  return out;
}

namespace detail {

class Parser {
 public:
  explicit Parser(const std::vector<Token>& toks) : toks_(toks) {
    if (toks_.empty() || toks_.back().kind != TokenKind::kEof)
      throw ParseError("token list must end with EOF", {0, 0});
  }

  Predicate run() {
    Predicate p = parse_or();
    expect_end({TokenKind::kAnd, TokenKind::kOr, TokenKind::kUntil, TokenKind::kEof});
    return p;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& advance() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void fail(const std::vector<TokenKind>& expected) const {
    const Token& t = peek();
    std::string msg = t.kind == TokenKind::kEof ? "unexpected end of input"
                                                : "unexpected token '" + t.lexeme + "'";
    msg += ", expected one of:";
    for (auto k : expected) msg += std::string(" ") + token_name(k);
    throw ParseError(msg, t.span, expected);
  }

  void expect_end(const std::vector<TokenKind>& expected) const {
    if (peek().kind != TokenKind::kEof) fail(expected);
  }

  Predicate parse_or() {
    std::vector<Predicate> parts{parse_and()};
    while (peek().kind == TokenKind::kOr) {
      advance();
      parts.push_back(parse_and());
    }
    return parts.size() == 1 ? parts[0] : ltl::disj(std::move(parts));
  }

  Predicate parse_and() {
    std::vector<Predicate> parts{parse_until()};
    while (peek().kind == TokenKind::kAnd) {
      advance();
      parts.push_back(parse_until());
    }
    return parts.size() == 1 ? parts[0] : ltl::conj(std::move(parts));
  }

  Predicate parse_until() {
    Predicate left = parse_unary();
    if (peek().kind != TokenKind::kUntil) return left;
    advance();
    return ltl::until(left, parse_until());
  }

  Predicate parse_unary() {
    switch (peek().kind) {
      case TokenKind::kNot: advance(); return ltl::neg(parse_unary());
      case TokenKind::kNext: advance(); return ltl::next(parse_unary());
      case TokenKind::kFinally: advance(); return ltl::finally(parse_unary());
      case TokenKind::kGlobally: advance(); return ltl::globally(parse_unary());
      default: return parse_primary();
    }
  }

  Predicate parse_primary() {
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::kIdent: advance(); return ltl::atom(t.lexeme);
      case TokenKind::kTrue: advance(); return ltl::top();
      case TokenKind::kFalse: advance(); return ltl::bot();
      case TokenKind::kLParen: {
        advance();
        Predicate inner = parse_or();
        if (peek().kind != TokenKind::kRParen)
          fail({TokenKind::kAnd, TokenKind::kOr, TokenKind::kUntil, TokenKind::kRParen});
        advance();
        return inner;
      }
      default:
        fail({TokenKind::kIdent, TokenKind::kTrue, TokenKind::kFalse, TokenKind::kNot,
              TokenKind::kNext, TokenKind::kFinally, TokenKind::kGlobally, TokenKind::kLParen});
    }
  }

  const std::vector<Token>& toks_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Predicate parse(const std::vector<Token>& tokens) { return detail::Parser(tokens).run(); }

inline Predicate parse(std::string_view input) { return parse(lex(input)); }

/// Fully parenthesized canonical text; parse(print(p)) is structurally equal to p.
inline std::string print(const Predicate& p) {
  switch (p->op) {
    case Op::kAtom: return p->name;
    case Op::kTrue: return "true";
    case Op::kFalse: return "false";
    case Op::kNot: return "(! " + print(p->children[0]) + ")";
    case Op::kNext: return "(X " + print(p->children[0]) + ")";
    case Op::kFinally: return "(F " + print(p->children[0]) + ")";
    case Op::kGlobally: return "(G " + print(p->children[0]) + ")";
    case Op::kUntil: return "(" + print(p->children[0]) + " U " + print(p->children[1]) + ")";
    case Op::kAnd:
    case Op::kOr: {
      if (p->children.size() == 1) return print(p->children[0]);
      std::string sep = p->op == Op::kAnd ? " & " : " | ";
      std::string out = "(";
      for (std::size_t i = 0; i < p->children.size(); ++i) {
        if (i) out += sep;
        out += print(p->children[i]);
      }
      return out + ")";
    }
  }
  return "?";
}

/// Blanks `#` line comments with spaces so byte offsets stay valid.
inline std::string strip_comments(std::string_view text) {
  std::string out(text);
  bool in_comment = false;
  for (char& c : out) {
    if (c == '\n') in_comment = false;
    else if (c == '#') in_comment = true;
    if (in_comment) c = ' ';
  }
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Loads a spec file: one predicate, `#` line comments allowed.
inline std::string load_spec_text(const std::string& path) {
  return strip_comments(read_text_file(path));
}

/// Renders a ParseError with the offending line and a caret marker.
inline std::string format_diagnostic(std::string_view input, const ParseError& err,
                                     std::string_view origin = "<input>") {
  std::size_t off = std::min(err.span().offset, input.size());
  std::size_t line_start = 0;
  std::size_t line_no = 1;
  for (std::size_t i = 0; i < off; ++i) {
    if (input[i] == '\n') {
      line_start = i + 1;
      ++line_no;
    }
  }
  std::size_t line_end = input.find('\n', off);
  if (line_end == std::string_view::npos) line_end = input.size();
  std::size_t col = off - line_start;
  std::ostringstream os;
  os << origin << ":" << line_no << ":" << col + 1 << ": error: " << err.what() << "\n";
  os << "  " << input.substr(line_start, line_end - line_start) << "\n";
  os << "  " << std::string(col, ' ') << '^' << std::string(err.span().length > 1 ? err.span().length - 1 : 0, '~')
     << "\n";
  return os.str();
}

inline nlohmann::json ast_to_json(const Predicate& p) {
  nlohmann::json j;
  j["op"] = op_tag(p->op);
  if (p->op == Op::kAtom) j["name"] = p->name;
  if (!p->children.empty()) {
    j["children"] = nlohmann::json::array();
    for (const auto& c : p->children) j["children"].push_back(ast_to_json(c));
  }
  return j;
}

}  // namespace tlvc
