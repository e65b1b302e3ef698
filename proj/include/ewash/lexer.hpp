#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace ewash {

using Clock = std::chrono::steady_clock;

/// Python lexical categories. Indent/Dedent/Newline/EndMarker are only
/// produced by the strict lexer that feeds the parser.
enum class TokKind : std::uint8_t {
  Name,
  Number,
  String,
  Op,
  Comment,
  Newline,  // end of a logical line
  Nl,       // non-logical line break (blank or comment-only line)
  Indent,
  Dedent,
  EndMarker,
  Error,  // lenient mode only: a byte run the lexer could not classify
};

struct Token {
  TokKind kind;
  std::uint32_t start;  // byte offsets into the lexed text
  std::uint32_t end;
  std::uint32_t line;  // 1-based
  std::uint32_t col;   // 0-based byte column

  std::string_view text(std::string_view src) const { return src.substr(start, end - start); }
};

/// Tokenizes Python 3 source the way the reference tokenizer does, emitting
/// INDENT/DEDENT/NEWLINE/NL/COMMENT/ENDMARKER. Throws SyntaxError on
/// unterminated strings, bad dedents, unbalanced brackets and stray
/// characters, and ParseTimeout once `deadline` has passed.
std::vector<Token> lex_python(std::string_view src,
                              std::optional<Clock::time_point> deadline = std::nullopt);

/// Kinds of the lenient lexeme stream used for token counting.
enum class LexemeKind : std::uint8_t { Name, Number, String, Op, Comment, Newline, Indent, Error };

struct Lexeme {
  LexemeKind kind;
  std::uint32_t start;
  std::uint32_t end;
};

/// Splits arbitrary text into Python lexemes without ever failing. Newlines
/// outside brackets and the leading indentation of each non-blank logical
/// line are lexemes; every other whitespace byte is trivia between lexemes.
std::vector<Lexeme> lex_lenient(std::string_view src);

bool is_python_keyword(std::string_view word);
bool is_identifier(std::string_view word);

/// Length of a string-literal prefix (r, b, u, f, rb, br, fr, rf in any case)
/// that is immediately followed by a quote at `pos`, or -1.
int string_prefix_length(std::string_view src, std::size_t pos);

/// Splits a complete string literal into prefix / quote / content.
struct StringParts {
  std::string_view prefix;
  std::string_view quote;  // ', ", ''' or """
  std::string_view content;
};
std::optional<StringParts> split_string_literal(std::string_view literal);

}  // namespace ewash
