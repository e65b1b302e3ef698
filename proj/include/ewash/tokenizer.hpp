#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ewash/lexer.hpp"
#include "ewash/syntax_model.hpp"

namespace ewash {

enum class TokenKind : std::uint8_t {
  Name,
  Number,
  String,
  Op,
  Comment,
  Newline,
  Indent,
  Error,
  Placeholder,  // a literal replaced by the normalizer
};

constexpr bool is_whitespace(TokenKind k) { return k == TokenKind::Newline || k == TokenKind::Indent; }

/// True for tokens made only of blanks and line breaks.
bool is_whitespace_token(std::string_view tok);

/// A token sequence. `kinds` runs parallel to `tokens` when known. With
/// provenance, `trivia[i]` is the whitespace preceding token i and
/// `trivia.back()` the trailing whitespace, so decoding is lossless.
struct TokenSeq {
  std::vector<std::string> tokens;
  std::vector<TokenKind> kinds;
  std::vector<Span> spans;
  std::vector<std::string> trivia;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  bool has_provenance() const noexcept { return trivia.size() == tokens.size() + 1; }

  /// Tokens [first, last) keeping kinds and trivia (the slice's trailing
  /// trivia is empty).
  TokenSeq slice(std::size_t first, std::size_t last) const;
  /// Appends `other`; provenance is kept only if both sides have it.
  void append(const TokenSeq& other);
  /// Appends a single token of the given kind.
  void push(std::string tok, TokenKind kind, std::string leading = {});

  /// Tokens with pure-whitespace entries removed.
  std::vector<std::string> content_tokens() const;

  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

/// Joins tokens with the canonical spacing rules (no provenance needed).
std::string decode_canonical(std::span<const std::string> tokens);

/// Set of subword pieces loaded from a one-piece-per-line vocab file.
/// `\n`, `\t` and `\s` escapes in the file denote newline, tab and space.
class Vocabulary {
 public:
  static Vocabulary load(const std::string& path);
  static Vocabulary from_pieces(std::vector<std::string> pieces, std::string name = "inline");

  bool contains(std::string_view piece) const { return pieces_.count(std::string(piece)) > 0; }
  std::size_t max_piece_bytes() const noexcept { return max_len_; }
  const std::string& id() const noexcept { return id_; }
  std::size_t size() const noexcept { return pieces_.size(); }

 private:
  std::unordered_set<std::string> pieces_;
  std::size_t max_len_ = 1;
  std::string id_;
};

/// Rewrites a literal lexeme (string or number); returns nullopt to keep it.
using LiteralRewrite = std::function<std::optional<std::string>(std::string_view lexeme, LexemeKind kind)>;

/// The single token-counting contract of the pipeline. The lexical backend
/// emits one token per Python lexeme (plus newline and indentation tokens);
/// the subword backend splits each lexeme by greedy longest match against a
/// vocabulary. An optional literal rewrite runs before subword splitting and
/// its replacements stay atomic.
class Tokenizer {
 public:
  static Tokenizer lexical();
  static Tokenizer subword(std::shared_ptr<const Vocabulary> vocab);
  /// "lexical" or "subword:<vocab-path>".
  static Tokenizer from_spec(std::string_view spec);

  Tokenizer with_literal_rewrite(LiteralRewrite rewrite, std::string id_suffix) const;
  /// The same backend without any literal rewrite.
  Tokenizer base() const;

  TokenSeq encode(std::string_view text) const;
  std::string decode(const TokenSeq& seq) const;
  std::size_t count(std::string_view text) const;

  const std::string& id() const noexcept { return id_; }
  bool normalizing() const noexcept { return static_cast<bool>(rewrite_); }

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  LiteralRewrite rewrite_;
  std::string id_ = "lexical";
  std::string base_id_ = "lexical";
};

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);

}  // namespace ewash
