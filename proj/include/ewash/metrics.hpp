#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ewash {

using Tokens = std::vector<std::string>;

struct PredictionRecord {
  std::string id;
  Tokens ground_truth;
  std::vector<Tokens> hypotheses;  // rank 1 first
  std::size_t context_len = 0;
  std::size_t sameline_len = 0;
  std::optional<std::vector<double>> logprobs;
  std::optional<std::string> error;  // adapter failure for this prompt

  nlohmann::json to_json() const;
  static PredictionRecord from_json(const nlohmann::json& j);
};

/// Percentage of eligible records (at least `n` ground-truth tokens) where
/// one of the top-`k` hypotheses starts with the first `n` ground-truth
/// tokens. Whitespace tokens in hypotheses are ignored. Throws
/// EmptyRecordSet when nothing is eligible.
double exact_match(std::span<const PredictionRecord> records, std::size_t n, std::size_t k);

struct RougeL {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
/// Throws EmptySequence if either side is empty.
RougeL rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);

/// Code points of UTF-8 text; bytes of invalid sequences count one each.
std::u32string code_points(std::string_view text);
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
/// 100 * (1 - distance / max length) over code points; two empty strings
/// score 100.
double edit_similarity(std::string_view candidate, std::string_view reference);

/// Corpus BLEU-4: uniform weights, unsmoothed unigram precision, add-one
/// smoothing for 2..4-grams, standard brevity penalty. Throws EmptyCorpus.
double bleu4(std::span<const Tokens> candidates, std::span<const Tokens> references);
inline constexpr const char* kBleuSmoothing = "add-one on n>=2 (numerator and denominator), none on n=1";

/// exp(-sum / count) over natural-log probabilities. Throws NoTokens, and
/// Error for a positive log-probability.
double perplexity(std::span<const std::vector<double>> logprobs);

/// Removes the whitespace prefix common to all non-blank lines.
std::string dedent(std::string_view text);
/// True if the dedented text parses and its first statement is a def.
bool is_function_definition(std::string_view text);
/// Throws EmptyList.
double syntax_ok_rate(std::span<const std::string> method_texts);

enum class BinKey { ContextLen, SamelineLen };
std::string_view to_string(BinKey key);

struct EmTable {
  std::map<std::pair<int, int>, std::optional<double>> em;  // (N, k) -> percent; null if no eligible record
  std::map<int, std::optional<double>> total;               // k -> mean over N
};

struct BinReport {
  double lo = 0;
  double hi = std::numeric_limits<double>::infinity();
  std::size_t count = 0;
  std::optional<EmTable> em;  // absent for empty bins
};

/// Half-open bins [e_i, e_i+1) plus [e_last, inf), and [0, e_0) when e_0 > 0.
/// An infinite last edge is allowed. Throws BadEdges unless edges strictly increase.
std::vector<BinReport> binned_report(std::span<const PredictionRecord> records, BinKey key,
                                     std::span<const double> edges);

std::vector<double> default_edges(BinKey key);

struct ReportOptions {
  std::vector<std::pair<BinKey, std::vector<double>>> bins;
  bool syntax_check = false;  // score decoded top-1 hypotheses as method texts
};

struct MetricReport {
  std::size_t records = 0;
  std::size_t failed = 0;  // records with an adapter error, excluded from scoring
  EmTable em;
  RougeL rouge_l;
  double edit_similarity = 0;
  double bleu4 = 0;
  std::optional<double> ppl;
  std::optional<double> syntax_ok;
  std::vector<std::pair<BinKey, std::vector<BinReport>>> bins;

  nlohmann::json to_json() const;
  /// Plain-text tables: overall EM@1..5 (top-1, top-5, Total), the other
  /// metrics, then one table per bin key.
  std::string render_table() const;
};

/// Scores every non-failed record. Throws EmptyRecordSet if none remain.
MetricReport make_report(std::span<const PredictionRecord> records, const ReportOptions& options = {});

}  // namespace ewash
