#include "ewash/lexer.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "ewash/errors.hpp"

namespace ewash {
namespace {

bool is_id_start(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c >= 0x80;
}
bool is_id_continue(unsigned char c) { return is_id_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_hex(char c) { return is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F'); }
bool is_oct(char c) { return c >= '0' && c <= '7'; }
bool is_bin(char c) { return c == '0' || c == '1'; }
bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\f'; }

std::size_t newline_length(std::string_view s, std::size_t p) {
  if (p >= s.size()) return 0;
  if (s[p] == '\n') return 1;
  if (s[p] == '\r') return (p + 1 < s.size() && s[p + 1] == '\n') ? 2 : 1;
  return 0;
}

// Operators, longest first.
constexpr std::array<std::string_view, 47> kOps = {
    "**=", "//=", ">>=", "<<=", "...", "!=", "**", "//", ">>", "<<", "<=", ">=",
    "==",  "->",  "+=",  "-=",  "*=",  "/=", "%=", "&=", "|=", "^=", "@=", ":=",
    "+",   "-",   "*",   "/",   "%",   "@",  "&",  "|",  "^",  "~",  "<",  ">",
    "(",   ")",   "[",   "]",   "{",   "}",  ",",  ":",  ".",  ";",  "="};

std::size_t match_op(std::string_view s, std::size_t p) {
  for (auto op : kOps) {
    if (s.compare(p, op.size(), op) == 0) return op.size();
  }
  return 0;
}

struct StringScan {
  std::size_t end;
  bool terminated;
  bool triple;
};

// `p` points at the opening quote.
StringScan scan_string(std::string_view s, std::size_t p) {
  const std::size_t n = s.size();
  const char q = s[p];
  const bool triple = p + 2 < n && s[p + 1] == q && s[p + 2] == q;
  p += triple ? 3 : 1;
  while (p < n) {
    const char c = s[p];
    if (c == '\\') {
      if (p + 2 < n && s[p + 1] == '\r' && s[p + 2] == '\n') {
        p += 3;
      } else {
        p += 2;
      }
      continue;
    }
    if (triple) {
      if (c == q && p + 2 < n && s[p + 1] == q && s[p + 2] == q) return {p + 3, true, true};
    } else {
      if (c == q) return {p + 1, true, false};
      if (c == '\n' || c == '\r') return {p, false, false};
    }
    ++p;
  }
  return {n, false, triple};
}

struct NumberScan {
  std::size_t end;
  bool ok;
};

NumberScan scan_number(std::string_view s, std::size_t p) {
  const std::size_t n = s.size();
  auto at = [&](std::size_t i) { return i < n ? s[i] : '\0'; };
  bool ok = true;
  // (_? digit)+ ; returns false when no digit was consumed
  auto digits = [&](bool (*pred)(char)) {
    if (!pred(at(p))) return false;
    ++p;
    while (true) {
      if (pred(at(p))) {
        ++p;
      } else if (at(p) == '_' && pred(at(p + 1))) {
        p += 2;
      } else {
        break;
      }
    }
    if (at(p) == '_') ok = false;
    return true;
  };
  auto exponent = [&]() {
    if (at(p) != 'e' && at(p) != 'E') return;
    std::size_t save = p;
    ++p;
    if (at(p) == '+' || at(p) == '-') ++p;
    if (!digits(is_digit)) {
      p = save;
      ok = false;
    }
  };
  auto imaginary = [&]() {
    if (at(p) == 'j' || at(p) == 'J') ++p;
  };

  if (at(p) == '0' && (at(p + 1) == 'x' || at(p + 1) == 'X' || at(p + 1) == 'o' ||
                       at(p + 1) == 'O' || at(p + 1) == 'b' || at(p + 1) == 'B')) {
    const char base = static_cast<char>(at(p + 1) | 0x20);
    p += 2;
    if (at(p) == '_') ++p;
    bool (*pred)(char) = base == 'x' ? is_hex : base == 'o' ? is_oct : is_bin;
    if (!digits(pred)) ok = false;
    return {p, ok};
  }
  if (at(p) == '.') {
    ++p;
    digits(is_digit);
    exponent();
    imaginary();
    return {p, ok};
  }
  const std::size_t int_start = p;
  digits(is_digit);
  const std::size_t int_end = p;
  bool is_float = false;
  if (at(p) == '.') {
    ++p;
    is_float = true;
    if (is_digit(at(p))) digits(is_digit);
  }
  if (at(p) == 'e' || at(p) == 'E') {
    is_float = true;
    exponent();
  }
  bool imag = at(p) == 'j' || at(p) == 'J';
  imaginary();
  if (!is_float && !imag && s[int_start] == '0') {
    for (std::size_t i = int_start; i < int_end; ++i) {
      if (s[i] != '0' && s[i] != '_') ok = false;
    }
  }
  return {p, ok};
}

std::size_t utf8_char_length(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xE) return 3;
  if ((c >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

bool is_python_keyword(std::string_view w) {
  static constexpr std::array<std::string_view, 35> kKeywords = {
      "False", "None",   "True",    "and",      "as",       "assert", "async",
      "await", "break",  "class",   "continue", "def",      "del",    "elif",
      "else",  "except", "finally", "for",      "from",     "global", "if",
      "import", "in",    "is",      "lambda",   "nonlocal", "not",    "or",
      "pass",  "raise",  "return",  "try",      "while",    "with",   "yield"};
  return std::find(kKeywords.begin(), kKeywords.end(), w) != kKeywords.end();
}

bool is_identifier(std::string_view w) {
  if (w.empty() || !is_id_start(static_cast<unsigned char>(w[0]))) return false;
  for (char c : w) {
    if (!is_id_continue(static_cast<unsigned char>(c))) return false;
  }
  return !is_python_keyword(w);
}

int string_prefix_length(std::string_view s, std::size_t pos) {
  auto quote_at = [&](std::size_t i) { return i < s.size() && (s[i] == '\'' || s[i] == '"'); };
  if (quote_at(pos)) return 0;
  auto lower = [&](std::size_t i) {
    return i < s.size() ? static_cast<char>(s[i] | 0x20) : '\0';
  };
  const char a = lower(pos);
  if ((a == 'r' || a == 'b' || a == 'u' || a == 'f') && quote_at(pos + 1)) return 1;
  const char b = lower(pos + 1);
  const bool pair = (a == 'r' && (b == 'b' || b == 'f')) || ((a == 'b' || a == 'f') && b == 'r');
  if (pair && quote_at(pos + 2)) return 2;
  return -1;
}

std::optional<StringParts> split_string_literal(std::string_view lit) {
  const int pl = string_prefix_length(lit, 0);
  if (pl < 0) return std::nullopt;
  std::string_view rest = lit.substr(static_cast<std::size_t>(pl));
  const char q = rest[0];
  std::size_t ql = 1;
  if (rest.size() >= 6 && rest[1] == q && rest[2] == q) ql = 3;
  if (rest.size() < 2 * ql) return std::nullopt;
  for (std::size_t i = 0; i < ql; ++i) {
    if (rest[rest.size() - 1 - i] != q) return std::nullopt;
  }
  return StringParts{lit.substr(0, static_cast<std::size_t>(pl)), rest.substr(0, ql),
                     rest.substr(ql, rest.size() - 2 * ql)};
}

std::vector<Token> lex_python(std::string_view s, std::optional<Clock::time_point> deadline) {
  const std::size_t n = s.size();
  std::vector<Token> out;
  out.reserve(n / 4 + 16);
  struct Level {
    int col;
    int alt;
  };
  std::vector<Level> indents{{0, 0}};
  std::string brackets;
  std::size_t pos = 0;
  std::uint32_t line = 1;
  std::size_t line_start = 0;
  bool at_bol = true;
  if (s.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;

  auto fail = [&](const std::string& msg, std::size_t at) {
    throw SyntaxError(msg, static_cast<int>(line), static_cast<int>(at - line_start + 1));
  };
  auto push = [&](TokKind k, std::size_t a, std::size_t b) {
    out.push_back({k, static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), line,
                   static_cast<std::uint32_t>(a - line_start)});
  };
  auto advance_lines = [&](std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to; ++i) {
      if (s[i] == '\n' || (s[i] == '\r' && (i + 1 >= to || s[i + 1] != '\n'))) {
        ++line;
        line_start = i + 1;
      }
    }
  };

  std::size_t tick = 0;
  while (true) {
    if (deadline && (++tick & 1023) == 0 && Clock::now() > *deadline) throw ParseTimeout();
    if (at_bol) {
      at_bol = false;
      int col = 0;
      int alt = 0;
      std::size_t p = pos;
      while (p < n && is_blank(s[p])) {
        if (s[p] == ' ') {
          ++col;
          ++alt;
        } else if (s[p] == '\t') {
          col = (col / 8 + 1) * 8;
          ++alt;
        } else {
          col = alt = 0;
        }
        ++p;
      }
      if (p >= n) {
        pos = p;
        break;
      }
      if (s[p] == '#' || s[p] == '\n' || s[p] == '\r') {
        pos = p;
        if (s[pos] == '#') {
          std::size_t e = pos;
          while (e < n && s[e] != '\n' && s[e] != '\r') ++e;
          push(TokKind::Comment, pos, e);
          pos = e;
        }
        if (const std::size_t nl = newline_length(s, pos)) {
          push(TokKind::Nl, pos, pos + nl);
          pos += nl;
          ++line;
          line_start = pos;
          at_bol = true;
        }
        continue;
      }
      const Level cur = indents.back();
      if (col == cur.col) {
        if (alt != cur.alt) fail("inconsistent use of tabs and spaces in indentation", p);
      } else if (col > cur.col) {
        if (alt <= cur.alt) fail("inconsistent use of tabs and spaces in indentation", p);
        indents.push_back({col, alt});
        push(TokKind::Indent, pos, p);
      } else {
        while (indents.size() > 1 && col < indents.back().col) {
          indents.pop_back();
          push(TokKind::Dedent, p, p);
        }
        if (col != indents.back().col) fail("unindent does not match any outer indentation level", p);
        if (alt != indents.back().alt) fail("inconsistent use of tabs and spaces in indentation", p);
      }
      pos = p;
    }

    while (pos < n && is_blank(s[pos])) ++pos;
    if (pos >= n) break;
    const char c = s[pos];

    if (c == '#') {
      std::size_t e = pos;
      while (e < n && s[e] != '\n' && s[e] != '\r') ++e;
      push(TokKind::Comment, pos, e);
      pos = e;
      continue;
    }
    if (const std::size_t nl = newline_length(s, pos)) {
      if (brackets.empty()) {
        push(TokKind::Newline, pos, pos + nl);
        at_bol = true;
      }
      pos += nl;
      ++line;
      line_start = pos;
      continue;
    }
    if (c == '\\') {
      const std::size_t nl = newline_length(s, pos + 1);
      if (nl == 0) fail("unexpected character after line continuation character", pos);
      pos += 1 + nl;
      ++line;
      line_start = pos;
      if (pos >= n) fail("unexpected EOF while parsing", pos);
      continue;
    }
    if (const int pl = string_prefix_length(s, pos); pl >= 0) {
      const StringScan sc = scan_string(s, pos + static_cast<std::size_t>(pl));
      if (!sc.terminated) {
        fail(sc.triple ? "EOF while scanning triple-quoted string literal"
                       : "EOL while scanning string literal",
             pos);
      }
      push(TokKind::String, pos, sc.end);
      advance_lines(pos, sc.end);
      pos = sc.end;
      continue;
    }
    if (is_digit(c) || (c == '.' && pos + 1 < n && is_digit(s[pos + 1]))) {
      const NumberScan sc = scan_number(s, pos);
      if (!sc.ok) fail("invalid numeric literal", pos);
      push(TokKind::Number, pos, sc.end);
      pos = sc.end;
      continue;
    }
    if (is_id_start(static_cast<unsigned char>(c))) {
      std::size_t e = pos + 1;
      while (e < n && is_id_continue(static_cast<unsigned char>(s[e]))) ++e;
      push(TokKind::Name, pos, e);
      pos = e;
      continue;
    }
    if (const std::size_t ol = match_op(s, pos)) {
      if (c == '(' || c == '[' || c == '{') {
        if (brackets.size() >= 200) fail("too many nested parentheses", pos);
        brackets.push_back(c);
      } else if (c == ')' || c == ']' || c == '}') {
        const char open = c == ')' ? '(' : c == ']' ? '[' : '{';
        if (brackets.empty()) fail(std::string("unmatched '") + c + "'", pos);
        if (brackets.back() != open) {
          fail(std::string("closing parenthesis '") + c +
                   "' does not match opening parenthesis '" + brackets.back() + "'",
               pos);
        }
        brackets.pop_back();
      }
      push(TokKind::Op, pos, pos + ol);
      pos += ol;
      continue;
    }
    fail("invalid character in identifier", pos);
  }

  if (!brackets.empty()) fail("unexpected EOF while parsing", n);
  auto last_significant = std::find_if(out.rbegin(), out.rend(), [](const Token& t) {
    return t.kind != TokKind::Comment && t.kind != TokKind::Nl;
  });
  if (last_significant != out.rend() && last_significant->kind != TokKind::Newline &&
      last_significant->kind != TokKind::Dedent) {
    push(TokKind::Newline, n, n);
  }
  while (indents.size() > 1) {
    indents.pop_back();
    push(TokKind::Dedent, n, n);
  }
  push(TokKind::EndMarker, n, n);
  return out;
}

std::vector<Lexeme> lex_lenient(std::string_view s) {
  const std::size_t n = s.size();
  std::vector<Lexeme> out;
  out.reserve(n / 3 + 4);
  int depth = 0;
  std::size_t pos = 0;
  bool at_bol = true;
  auto push = [&](LexemeKind k, std::size_t a, std::size_t b) {
    out.push_back({k, static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)});
  };
  while (pos < n) {
    if (at_bol) {
      at_bol = false;
      std::size_t p = pos;
      while (p < n && is_blank(s[p])) ++p;
      if (p > pos && p < n && newline_length(s, p) == 0) push(LexemeKind::Indent, pos, p);
      pos = p;
    }
    while (pos < n && is_blank(s[pos])) ++pos;
    if (pos >= n) break;
    const char c = s[pos];
    if (const std::size_t nl = newline_length(s, pos)) {
      if (depth == 0) {
        push(LexemeKind::Newline, pos, pos + nl);
        at_bol = true;
      }
      pos += nl;
      continue;
    }
    if (c == '\\') {
      if (const std::size_t nl = newline_length(s, pos + 1)) {
        pos += 1 + nl;
      } else {
        push(LexemeKind::Error, pos, pos + 1);
        ++pos;
      }
      continue;
    }
    if (c == '#') {
      std::size_t e = pos;
      while (e < n && s[e] != '\n' && s[e] != '\r') ++e;
      push(LexemeKind::Comment, pos, e);
      pos = e;
      continue;
    }
    if (const int pl = string_prefix_length(s, pos); pl >= 0) {
      const StringScan sc = scan_string(s, pos + static_cast<std::size_t>(pl));
      push(sc.terminated ? LexemeKind::String : LexemeKind::Error, pos, sc.end);
      pos = sc.end;
      continue;
    }
    if (is_digit(c) || (c == '.' && pos + 1 < n && is_digit(s[pos + 1]))) {
      const NumberScan sc = scan_number(s, pos);
      push(LexemeKind::Number, pos, sc.end);
      pos = sc.end;
      continue;
    }
    if (is_id_start(static_cast<unsigned char>(c))) {
      std::size_t e = pos + 1;
      while (e < n && is_id_continue(static_cast<unsigned char>(s[e]))) ++e;
      push(LexemeKind::Name, pos, e);
      pos = e;
      continue;
    }
    if (const std::size_t ol = match_op(s, pos)) {
      if (c == '(' || c == '[' || c == '{') ++depth;
      if ((c == ')' || c == ']' || c == '}') && depth > 0) --depth;
      push(LexemeKind::Op, pos, pos + ol);
      pos += ol;
      continue;
    }
    const std::size_t len = std::min(utf8_char_length(static_cast<unsigned char>(c)), n - pos);
    push(LexemeKind::Error, pos, pos + len);
    pos += len;
  }
  return out;
}

}  // namespace ewash
