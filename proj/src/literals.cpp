#include "ewash/literals.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "ewash/errors.hpp"
#include "ewash/lexer.hpp"
#include "ewash/parser.hpp"

namespace ewash {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_fstring(std::string_view prefix) { return lower(prefix).find('f') != std::string::npos; }

std::string fragment_key(std::string_view prefix, std::string_view fragment) {
  return lower(prefix) + "\"" + std::string(fragment) + "\"";
}

std::string tag_of(const std::string& placeholder) {
  if (placeholder.size() >= 2 && placeholder.front() == '<' && placeholder.back() == '>') {
    return placeholder.substr(1, placeholder.size() - 2);
  }
  return placeholder;
}

std::string preserved(const NormalizationConfig& cfg, const std::string& placeholder,
                      std::string_view value) {
  std::string out = cfg.preserved_format;
  const std::string tag = tag_of(placeholder);
  for (auto pos = out.find("{tag}"); pos != std::string::npos; pos = out.find("{tag}", pos + tag.size())) {
    out.replace(pos, 5, tag);
  }
  if (auto pos = out.find("{value}"); pos != std::string::npos) out.replace(pos, 7, value);
  return out;
}

bool is_text_placeholder(std::string_view literal, const NormalizationConfig& cfg) {
  return literal == cfg.text_str_placeholder;
}

void write_pairs(nlohmann::json& arr, const std::vector<std::pair<std::string, std::uint64_t>>& v) {
  arr = nlohmann::json::array();
  for (const auto& [value, count] : v) arr.push_back({value, count});
}

std::vector<std::pair<std::string, std::uint64_t>> read_pairs(const nlohmann::json& arr) {
  std::vector<std::pair<std::string, std::uint64_t>> out;
  for (const auto& e : arr) out.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::uint64_t>());
  return out;
}

}  // namespace

bool LiteralTable::keeps_string(std::string_view key) const {
  return std::any_of(top_strings.begin(), top_strings.end(),
                     [&](const auto& e) { return e.first == key; });
}

bool LiteralTable::keeps_number(std::string_view spelling) const {
  return std::any_of(top_numbers.begin(), top_numbers.end(),
                     [&](const auto& e) { return e.first == spelling; });
}

nlohmann::json LiteralTable::to_json() const {
  nlohmann::json j;
  write_pairs(j["strings"], top_strings);
  write_pairs(j["numbers"], top_numbers);
  j["corpus_files"] = corpus_files;
  return j;
}

LiteralTable LiteralTable::from_json(const nlohmann::json& j) {
  LiteralTable t;
  t.top_strings = read_pairs(j.at("strings"));
  t.top_numbers = read_pairs(j.at("numbers"));
  t.corpus_files = j.value("corpus_files", std::uint64_t{0});
  return t;
}

LiteralTable LiteralTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open literal table " + path);
  return from_json(nlohmann::json::parse(in));
}

void LiteralTable::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write literal table " + path);
  out << to_json().dump(1) << "\n";
}

std::string LiteralTable::fingerprint() const { return hex64(fnv1a64(to_json().dump())).substr(0, 12); }

std::string string_literal_key(std::string_view literal) {
  const auto parts = split_string_literal(literal);
  if (!parts) return std::string(literal);
  std::string prefix = lower(parts->prefix);
  prefix.erase(std::remove(prefix.begin(), prefix.end(), 'u'), prefix.end());
  if (prefix.empty()) return std::string(parts->content);
  return prefix + "\"" + std::string(parts->content) + "\"";
}

std::vector<LiteralPiece> split_fstring(std::string_view s) {
  std::vector<LiteralPiece> out;
  std::size_t run = 0;
  std::size_t i = 0;
  auto flush = [&](std::size_t upto) {
    if (upto > run) out.push_back({true, s.substr(run, upto - run)});
  };
  while (i < s.size()) {
    const char c = s[i];
    if ((c == '{' || c == '}') && i + 1 < s.size() && s[i + 1] == c) {
      i += 2;
      continue;
    }
    if (c != '{') {
      ++i;
      continue;
    }
    flush(i);
    std::size_t j = i + 1;
    int depth = 1;
    while (j < s.size() && depth > 0) {
      const char d = s[j];
      if (d == '\'' || d == '"') {
        const auto close = s.find(d, j + 1);
        j = close == std::string_view::npos ? s.size() : close + 1;
        continue;
      }
      if (d == '{') ++depth;
      if (d == '}') --depth;
      ++j;
    }
    out.push_back({false, s.substr(i, j - i)});
    i = run = j;
  }
  flush(s.size());
  return out;
}

void LiteralCounts::bump(std::map<std::string, Entry, std::less<>>& m, std::string key,
                         std::uint32_t file, std::uint32_t pos) {
  Entry& e = m[std::move(key)];
  ++e.count;
  e.first_seen = std::min(e.first_seen, std::make_pair(file, pos));
}

void LiteralCounts::add_text(std::string_view text, std::uint32_t file_index) {
  ++files_;
  const NormalizationConfig defaults;
  const auto toks = lex_python(text);
  std::uint32_t pos = 0;
  for (const Token& t : toks) {
    const std::string_view lit = t.text(text);
    if (t.kind == TokKind::Number) {
      bump(numbers_, std::string(lit), file_index, pos++);
    } else if (t.kind == TokKind::String) {
      if (is_text_placeholder(lit, defaults)) continue;
      const auto parts = split_string_literal(lit);
      if (parts && is_fstring(parts->prefix)) {
        for (const auto& piece : split_fstring(parts->content)) {
          if (piece.is_literal) bump(strings_, fragment_key(parts->prefix, piece.text), file_index, pos++);
        }
      } else {
        bump(strings_, string_literal_key(lit), file_index, pos++);
      }
    }
  }
}

void LiteralCounts::add_file(const FileSkeleton& skeleton, std::uint32_t file_index) {
  add_text(skeleton.source().text(), file_index);
}

void LiteralCounts::merge(const LiteralCounts& other) {
  for (const auto& pair : {std::make_pair(&strings_, &other.strings_), std::make_pair(&numbers_, &other.numbers_)}) {
    for (const auto& [key, e] : *pair.second) {
      Entry& mine = (*pair.first)[key];
      mine.count += e.count;
      mine.first_seen = std::min(mine.first_seen, e.first_seen);
    }
  }
  files_ += other.files_;
}

LiteralTable LiteralCounts::finalize(std::size_t max_strings, std::size_t max_numbers) const {
  auto top = [](const std::map<std::string, Entry, std::less<>>& m, std::size_t k) {
    std::vector<std::pair<const std::string*, const Entry*>> v;
    v.reserve(m.size());
    for (const auto& [key, e] : m) v.emplace_back(&key, &e);
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      if (a.second->count != b.second->count) return a.second->count > b.second->count;
      return a.second->first_seen < b.second->first_seen;
    });
    std::vector<std::pair<std::string, std::uint64_t>> out;
    for (std::size_t i = 0; i < v.size() && i < k; ++i) out.emplace_back(*v[i].first, v[i].second->count);
    return out;
  };
  LiteralTable t;
  t.top_strings = top(strings_, max_strings);
  t.top_numbers = top(numbers_, max_numbers);
  t.corpus_files = files_;
  return t;
}

std::uint64_t LiteralCounts::string_occurrences(std::string_view key) const {
  auto it = strings_.find(key);
  return it == strings_.end() ? 0 : it->second.count;
}

std::uint64_t LiteralCounts::number_occurrences(std::string_view spelling) const {
  auto it = numbers_.find(spelling);
  return it == numbers_.end() ? 0 : it->second.count;
}

LiteralTable count_literals(const std::vector<FileSkeleton>& files, std::size_t max_strings,
                            std::size_t max_numbers) {
  LiteralCounts counts;
  for (std::size_t i = 0; i < files.size(); ++i) counts.add_file(files[i], static_cast<std::uint32_t>(i));
  return counts.finalize(max_strings, max_numbers);
}

std::optional<std::string> rewrite_literal(std::string_view lexeme, bool is_number,
                                           const LiteralTable& table,
                                           const NormalizationConfig& cfg) {
  const bool text = cfg.mode == NormalizeMode::Text;
  if (is_number) {
    if (table.keeps_number(lexeme)) {
      if (text) return std::nullopt;
      return preserved(cfg, cfg.num_placeholder, lexeme);
    }
    const std::string& ph = text ? cfg.text_num_placeholder : cfg.num_placeholder;
    if (lexeme == ph) return std::nullopt;
    return ph;
  }
  const auto parts = split_string_literal(lexeme);
  if (parts && is_fstring(parts->prefix)) {
    // only the literal fragments are replaced; fields are code
    std::string out(lexeme.substr(0, parts->prefix.size() + parts->quote.size()));
    bool changed = false;
    for (const auto& piece : split_fstring(parts->content)) {
      if (!piece.is_literal) {
        out += piece.text;
        continue;
      }
      const std::string key = fragment_key(parts->prefix, piece.text);
      std::string repl;
      if (table.keeps_string(key)) {
        repl = text ? std::string(piece.text) : preserved(cfg, cfg.str_placeholder, piece.text);
      } else {
        repl = cfg.str_placeholder;
      }
      changed = changed || repl != piece.text;
      out += repl;
    }
    out += parts->quote;
    if (!changed) return std::nullopt;
    return out;
  }
  if (text && is_text_placeholder(lexeme, cfg)) return std::nullopt;
  const std::string key = string_literal_key(lexeme);
  if (table.keeps_string(key)) {
    if (text) return std::nullopt;
    return preserved(cfg, cfg.str_placeholder, key);
  }
  if (!text) return cfg.str_placeholder;
  // keep a bytes prefix so implicit concatenation stays legal
  std::string prefix;
  if (parts && lower(parts->prefix).find('b') != std::string::npos) prefix = "b";
  std::string out = prefix + cfg.text_str_placeholder;
  if (out == lexeme) return std::nullopt;
  return out;
}

NormalizedText normalize(std::string_view text, const LiteralTable& table,
                         const NormalizationConfig& cfg) {
  const Module mod = parse_module(text);
  NormalizedText out;
  out.text.reserve(text.size());
  std::uint32_t copied = 0;
  for (const Token& t : mod.tokens) {
    if (t.kind != TokKind::String && t.kind != TokKind::Number) continue;
    auto repl = rewrite_literal(t.text(text), t.kind == TokKind::Number, table, cfg);
    if (!repl) continue;
    out.text.append(text.substr(copied, t.start - copied));
    out.replacements.push_back({static_cast<std::uint32_t>(out.text.size()),
                                static_cast<std::uint32_t>(repl->size()), std::string(t.text(text))});
    out.text += *repl;
    copied = t.end;
  }
  out.text.append(text.substr(copied));
  return out;
}

Tokenizer normalizing_tokenizer(const Tokenizer& base, const LiteralTable& table,
                                const NormalizationConfig& cfg) {
  NormalizationConfig token_cfg = cfg;
  token_cfg.mode = NormalizeMode::Token;
  auto rewrite = [table, token_cfg](std::string_view lexeme, LexemeKind kind) {
    return rewrite_literal(lexeme, kind == LexemeKind::Number, table, token_cfg);
  };
  return base.with_literal_rewrite(rewrite, "norm:" + table.fingerprint());
}

std::size_t placeholder_collisions(std::string_view text, const NormalizationConfig& cfg) {
  std::size_t n = 0;
  for (const std::string& ph : {cfg.str_placeholder, cfg.num_placeholder}) {
    if (ph.empty()) continue;
    for (auto pos = text.find(ph); pos != std::string_view::npos; pos = text.find(ph, pos + 1)) ++n;
  }
  return n;
}

}  // namespace ewash
