#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ewash/syntax_model.hpp"
#include "ewash/tokenizer.hpp"
#include "json.hpp"

namespace ewash {

/// Most frequent literals of a corpus, by count descending with first-seen
/// order breaking ties.
struct LiteralTable {
  std::vector<std::pair<std::string, std::uint64_t>> top_strings;
  std::vector<std::pair<std::string, std::uint64_t>> top_numbers;
  std::uint64_t corpus_files = 0;

  bool keeps_string(std::string_view key) const;
  bool keeps_number(std::string_view spelling) const;

  nlohmann::json to_json() const;
  static LiteralTable from_json(const nlohmann::json& j);
  static LiteralTable load(const std::string& path);
  void save(const std::string& path) const;
  /// Short content hash, used in tokenizer ids and run manifests.
  std::string fingerprint() const;

  friend bool operator==(const LiteralTable&, const LiteralTable&) = default;
};

/// Partial literal counts; merging is associative and commutative, so files
/// can be counted on several threads and combined afterwards.
class LiteralCounts {
 public:
  /// Counts the literals of one file. `file_index` is its position in the
  /// corpus order and fixes first-seen tie-breaking.
  void add_file(const FileSkeleton& skeleton, std::uint32_t file_index);
  void add_text(std::string_view text, std::uint32_t file_index);
  void merge(const LiteralCounts& other);

  LiteralTable finalize(std::size_t max_strings = 200, std::size_t max_numbers = 30) const;

  std::uint64_t string_occurrences(std::string_view key) const;
  std::uint64_t number_occurrences(std::string_view spelling) const;

 private:
  struct Entry {
    std::uint64_t count = 0;
    std::pair<std::uint32_t, std::uint32_t> first_seen{UINT32_MAX, UINT32_MAX};
  };
  void bump(std::map<std::string, Entry, std::less<>>& m, std::string key, std::uint32_t file,
            std::uint32_t pos);

  std::map<std::string, Entry, std::less<>> strings_;
  std::map<std::string, Entry, std::less<>> numbers_;
  std::uint64_t files_ = 0;
};

LiteralTable count_literals(const std::vector<FileSkeleton>& files, std::size_t max_strings = 200,
                            std::size_t max_numbers = 30);

enum class NormalizeMode {
  Token,  // placeholders are special tokens; output is for models, not Python
  Text,   // placeholders are valid literals, so the output still parses
};

struct NormalizationConfig {
  std::string str_placeholder = "<STR_LIT>";
  std::string num_placeholder = "<NUM_LIT>";
  /// `{tag}` is the placeholder without angle brackets, `{value}` the kept literal.
  std::string preserved_format = "<{tag}:{value}>";
  std::string text_str_placeholder = "\"<STR_LIT>\"";
  std::string text_num_placeholder = "0";
  NormalizeMode mode = NormalizeMode::Token;
};

/// Table key of a string literal: the unquoted content, or prefix plus
/// double-quoted content for b/r/f-prefixed literals (`b"abc"`).
std::string string_literal_key(std::string_view literal);

struct LiteralPiece {
  bool is_literal;  // literal text, as opposed to a `{...}` replacement field
  std::string_view text;
};
/// Splits f-string content into literal text and replacement fields.
std::vector<LiteralPiece> split_fstring(std::string_view content);

struct Replacement {
  std::uint32_t offset = 0;  // in the normalized text
  std::uint32_t length = 0;
  std::string original;
};

struct NormalizedText {
  std::string text;
  std::vector<Replacement> replacements;  // sidecar map back to the source
};

/// Rewrites one literal lexeme; nullopt when it is kept verbatim.
std::optional<std::string> rewrite_literal(std::string_view lexeme, bool is_number,
                                           const LiteralTable& table,
                                           const NormalizationConfig& cfg);

/// Replaces the literals of `text`, which must parse (SyntaxError otherwise).
NormalizedText normalize(std::string_view text, const LiteralTable& table,
                         const NormalizationConfig& cfg = {});

/// Tokenizer that normalizes literals while encoding (token mode).
Tokenizer normalizing_tokenizer(const Tokenizer& base, const LiteralTable& table,
                                const NormalizationConfig& cfg = {});

/// Occurrences of the configured placeholder spellings in raw source. A
/// corpus must have none for normalized output to be unambiguous.
std::size_t placeholder_collisions(std::string_view text, const NormalizationConfig& cfg = {});

}  // namespace ewash
