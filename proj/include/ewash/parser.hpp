#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "ewash/lexer.hpp"

namespace ewash {

/// Index range into Module::tokens, inclusive on both ends.
struct TokRange {
  std::uint32_t first = 0;
  std::uint32_t last = 0;
};

enum class ExprKind : std::uint8_t {
  Name,
  Attribute,
  Subscript,
  Call,
  Starred,
  Tuple,
  List,
  Str,  // one or more adjacent non-f string literals
  FStr,  // adjacent literals, at least one of them an f-string
  Constant,  // numbers, None/True/False, Ellipsis
  NamedExpr,
  Lambda,
  Yield,
  Await,
  Other,  // operators, comprehensions, dict/set displays, conditional expressions
};

/// Lightweight expression node: enough structure to validate assignment
/// targets and to recognise docstrings and `self.<attr>` targets.
struct Expr {
  ExprKind kind = ExprKind::Other;
  TokRange range{};
  bool parenthesized = false;
  std::vector<Expr> elts;  // Tuple/List items, Starred/Attribute/Subscript value
};

enum class StmtKind : std::uint8_t {
  Expr,
  Assign,
  AugAssign,
  AnnAssign,
  Import,
  ImportFrom,
  Pass,
  Break,
  Continue,
  Return,
  Raise,
  Global,
  Nonlocal,
  Del,
  Assert,
  If,
  While,
  For,
  Try,
  With,
  FunctionDef,
  ClassDef,
};

struct Stmt {
  StmtKind kind = StmtKind::Pass;
  TokRange range{};  // whole statement, decorators included, NEWLINE excluded

  // FunctionDef / ClassDef
  std::vector<TokRange> decorators;
  TokRange header{};  // `def`/`async def`/`class` through the closing ':'
  std::uint32_t name_tok = 0;
  bool is_async = false;
  std::optional<std::uint32_t> first_param_tok;

  // Suite statements. For if/while/for/try/with these are the statements of
  // every clause in source order.
  std::vector<Stmt> body;

  // Assign / AugAssign / AnnAssign: one target per `=`-separated segment.
  std::vector<Expr> targets;
  // Token separating targets from the value: last top-level `=`, the
  // augmented operator, or the annotation ':'.
  std::optional<std::uint32_t> split_tok;
  // Expr statements: the expression.
  std::optional<Expr> value;
};

struct Module {
  std::vector<Token> tokens;  // significant tokens (no COMMENT / NL)
  std::vector<Token> comments;
  std::vector<Stmt> body;
};

/// Parses Python 3.8 source into a statement tree. Throws SyntaxError for
/// anything `ast.parse` would reject at the grammar level (including invalid
/// assignment targets, argument ordering and f-string expressions) and
/// ParseTimeout once the deadline passes.
Module parse_module(std::string_view src, std::optional<Clock::time_point> deadline = std::nullopt);

/// True when `src` parses as a module.
bool parses(std::string_view src);

}  // namespace ewash
