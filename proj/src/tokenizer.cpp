#include "ewash/tokenizer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ewash/errors.hpp"

namespace ewash {

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

bool is_whitespace_token(std::string_view tok) {
  if (tok.empty()) return false;
  for (char c : tok) {
    if (c != ' ' && c != '\t' && c != '\f' && c != '\r' && c != '\n') return false;
  }
  return true;
}

TokenSeq TokenSeq::slice(std::size_t first, std::size_t last) const {
  TokenSeq out;
  last = std::min(last, tokens.size());
  first = std::min(first, last);
  out.tokens.assign(tokens.begin() + first, tokens.begin() + last);
  if (kinds.size() == tokens.size()) out.kinds.assign(kinds.begin() + first, kinds.begin() + last);
  if (spans.size() == tokens.size()) out.spans.assign(spans.begin() + first, spans.begin() + last);
  if (has_provenance()) {
    out.trivia.assign(trivia.begin() + first, trivia.begin() + last);
    out.trivia.emplace_back();
  }
  return out;
}

void TokenSeq::append(const TokenSeq& other) {
  const bool keep_kinds = kinds.size() == tokens.size() && other.kinds.size() == other.tokens.size();
  const bool keep_trivia = (has_provenance() || (tokens.empty() && trivia.empty())) &&
                           other.has_provenance();
  if (keep_trivia) {
    std::string carry = trivia.empty() ? std::string() : std::move(trivia.back());
    if (!trivia.empty()) trivia.pop_back();
    trivia.push_back(carry + other.trivia.front());
    trivia.insert(trivia.end(), other.trivia.begin() + 1, other.trivia.end());
  } else {
    trivia.clear();
  }
  tokens.insert(tokens.end(), other.tokens.begin(), other.tokens.end());
  if (keep_kinds) {
    kinds.insert(kinds.end(), other.kinds.begin(), other.kinds.end());
  } else {
    kinds.clear();
  }
  spans.clear();
}

void TokenSeq::push(std::string tok, TokenKind kind, std::string leading) {
  const bool keep_kinds = kinds.size() == tokens.size();
  if (tokens.empty() && trivia.empty()) trivia.emplace_back();
  if (has_provenance()) {
    trivia.back() += leading;
    trivia.emplace_back();
  }
  tokens.push_back(std::move(tok));
  if (keep_kinds) {
    kinds.push_back(kind);
  } else {
    kinds.clear();
  }
  spans.clear();
}

std::vector<std::string> TokenSeq::content_tokens() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  const bool typed = kinds.size() == tokens.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const bool ws = typed ? is_whitespace(kinds[i]) : is_whitespace_token(tokens[i]);
    if (!ws) out.push_back(tokens[i]);
  }
  return out;
}

namespace {

bool is_word(std::string_view t) {
  if (t.empty()) return false;
  const unsigned char c = static_cast<unsigned char>(t[0]);
  return c == '_' || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c >= 0x80 || c == '\'' || c == '"';
}

bool space_between(std::string_view prev, std::string_view tok) {
  if (tok == ")" || tok == "]" || tok == "}" || tok == "," || tok == ":" || tok == "." ||
      tok == ";") {
    return false;
  }
  if (prev == "(" || prev == "[" || prev == "{" || prev == "." || prev == "~" || prev == "@") {
    return false;
  }
  if (tok == "(" || tok == "[") {
    if (prev == ")" || prev == "]") return false;
    if (is_word(prev) && !is_python_keyword(prev)) return false;
  }
  return true;
}

TokenKind kind_of(LexemeKind k) {
  switch (k) {
    case LexemeKind::Name:
      return TokenKind::Name;
    case LexemeKind::Number:
      return TokenKind::Number;
    case LexemeKind::String:
      return TokenKind::String;
    case LexemeKind::Op:
      return TokenKind::Op;
    case LexemeKind::Comment:
      return TokenKind::Comment;
    case LexemeKind::Newline:
      return TokenKind::Newline;
    case LexemeKind::Indent:
      return TokenKind::Indent;
    case LexemeKind::Error:
      return TokenKind::Error;
  }
  return TokenKind::Error;
}

std::string unescape_piece(const std::string& line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && i + 1 < line.size()) {
      const char e = line[i + 1];
      if (e == 'n') {
        out += '\n';
      } else if (e == 't') {
        out += '\t';
      } else if (e == 's') {
        out += ' ';
      } else if (e == '\\') {
        out += '\\';
      } else {
        out += line[i];
        continue;
      }
      ++i;
    } else {
      out += line[i];
    }
  }
  return out;
}

}  // namespace

std::string decode_canonical(std::span<const std::string> tokens) {
  std::string out;
  std::string_view prev;
  bool line_start = true;
  for (const std::string& tok : tokens) {
    if (is_whitespace_token(tok)) {
      out += tok;
      line_start = tok.find('\n') != std::string::npos || tok.find('\r') != std::string::npos ||
                   line_start;
      prev = {};
      continue;
    }
    if (!line_start && !prev.empty() && space_between(prev, tok)) out += ' ';
    out += tok;
    prev = tok;
    line_start = false;
  }
  return out;
}

Vocabulary Vocabulary::from_pieces(std::vector<std::string> pieces, std::string name) {
  Vocabulary v;
  std::string joined;
  for (auto& p : pieces) {
    if (p.empty()) continue;
    v.max_len_ = std::max(v.max_len_, p.size());
    joined += p;
    joined += '\0';
    v.pieces_.insert(std::move(p));
  }
  v.id_ = name + "@" + hex64(fnv1a64(joined)).substr(0, 12);
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open vocabulary " + path);
  std::vector<std::string> pieces;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // "piece<TAB>score" lines (sentencepiece .vocab) keep only the piece
    if (const auto tab = line.find('\t'); tab != std::string::npos && tab > 0) line.resize(tab);
    pieces.push_back(unescape_piece(line));
  }
  std::string name = path;
  if (const auto slash = name.find_last_of('/'); slash != std::string::npos) {
    name = name.substr(slash + 1);
  }
  return from_pieces(std::move(pieces), name);
}

Tokenizer Tokenizer::lexical() { return Tokenizer(); }

Tokenizer Tokenizer::subword(std::shared_ptr<const Vocabulary> vocab) {
  Tokenizer t;
  t.id_ = t.base_id_ = "subword:" + vocab->id();
  t.vocab_ = std::move(vocab);
  return t;
}

Tokenizer Tokenizer::from_spec(std::string_view spec) {
  if (spec == "lexical") return lexical();
  if (spec.substr(0, 8) == "subword:") {
    return subword(std::make_shared<const Vocabulary>(Vocabulary::load(std::string(spec.substr(8)))));
  }
  throw Error("unknown tokenizer: " + std::string(spec));
}

Tokenizer Tokenizer::with_literal_rewrite(LiteralRewrite rewrite, std::string id_suffix) const {
  Tokenizer t = *this;
  t.rewrite_ = std::move(rewrite);
  t.id_ += "+" + id_suffix;
  return t;
}

Tokenizer Tokenizer::base() const {
  Tokenizer t = *this;
  t.rewrite_ = nullptr;
  t.id_ = base_id_;
  return t;
}

TokenSeq Tokenizer::encode(std::string_view text) const {
  const auto lexemes = lex_lenient(text);
  TokenSeq out;
  out.tokens.reserve(lexemes.size());
  out.kinds.reserve(lexemes.size());
  out.spans.reserve(lexemes.size());
  out.trivia.reserve(lexemes.size() + 1);
  std::uint32_t prev_end = 0;
  auto emit = [&](std::string tok, TokenKind kind, Span span, std::string leading) {
    out.tokens.push_back(std::move(tok));
    out.kinds.push_back(kind);
    out.spans.push_back(span);
    out.trivia.push_back(std::move(leading));
  };
  for (const Lexeme& lx : lexemes) {
    std::string leading(text.substr(prev_end, lx.start - prev_end));
    prev_end = lx.end;
    const std::string_view piece = text.substr(lx.start, lx.end - lx.start);
    if (rewrite_ && (lx.kind == LexemeKind::String || lx.kind == LexemeKind::Number)) {
      if (auto replaced = rewrite_(piece, lx.kind)) {
        emit(std::move(*replaced), TokenKind::Placeholder, {lx.start, lx.end}, std::move(leading));
        continue;
      }
    }
    const TokenKind kind = kind_of(lx.kind);
    if (!vocab_) {
      emit(std::string(piece), kind, {lx.start, lx.end}, std::move(leading));
      continue;
    }
    std::size_t i = 0;
    while (i < piece.size()) {
      std::size_t take = 0;
      for (std::size_t len = std::min(vocab_->max_piece_bytes(), piece.size() - i); len > 0; --len) {
        if (i + len < piece.size() && (static_cast<unsigned char>(piece[i + len]) & 0xC0) == 0x80) {
          continue;  // would split a UTF-8 sequence
        }
        if (vocab_->contains(piece.substr(i, len))) {
          take = len;
          break;
        }
      }
      if (take == 0) {
        take = 1;
        while (i + take < piece.size() &&
               (static_cast<unsigned char>(piece[i + take]) & 0xC0) == 0x80) {
          ++take;
        }
      }
      const auto a = static_cast<std::uint32_t>(lx.start + i);
      emit(std::string(piece.substr(i, take)), kind, {a, static_cast<std::uint32_t>(a + take)},
           i == 0 ? std::move(leading) : std::string());
      i += take;
    }
  }
  out.trivia.emplace_back(text.substr(prev_end));
  return out;
}

std::string Tokenizer::decode(const TokenSeq& seq) const {
  if (!seq.has_provenance()) return decode_canonical(seq.tokens);
  std::string out;
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    out += seq.trivia[i];
    out += seq.tokens[i];
  }
  out += seq.trivia.back();
  return out;
}

std::size_t Tokenizer::count(std::string_view text) const {
  if (!vocab_) return lex_lenient(text).size();
  return encode(text).size();
}

}  // namespace ewash
