#include "ewash/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ewash/errors.hpp"
#include "ewash/parser.hpp"
#include "ewash/tokenizer.hpp"

namespace ewash {

nlohmann::json PredictionRecord::to_json() const {
  nlohmann::json j{{"id", id},
                   {"ground_truth", ground_truth},
                   {"hypotheses", hypotheses},
                   {"context_len", context_len},
                   {"sameline_len", sameline_len}};
  if (logprobs) j["logprobs"] = *logprobs;
  if (error) j["error"] = *error;
  return j;
}

PredictionRecord PredictionRecord::from_json(const nlohmann::json& j) {
  PredictionRecord r;
  r.id = j.value("id", std::string());
  r.ground_truth = j.at("ground_truth").get<Tokens>();
  r.hypotheses = j.value("hypotheses", std::vector<Tokens>{});
  r.context_len = j.value("context_len", std::size_t{0});
  r.sameline_len = j.value("sameline_len", std::size_t{0});
  if (j.contains("logprobs") && !j["logprobs"].is_null()) r.logprobs = j["logprobs"].get<std::vector<double>>();
  if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
  return r;
}

namespace {

Tokens content(const Tokens& t) {
  Tokens out;
  for (const auto& s : t) {
    if (!is_whitespace_token(s)) out.push_back(s);
  }
  return out;
}

bool prefix_hit(const Tokens& hyp, const Tokens& truth, std::size_t n) {
  std::size_t matched = 0;
  for (const auto& tok : hyp) {
    if (is_whitespace_token(tok)) continue;
    if (matched == n) break;
    if (tok != truth[matched]) return false;
    ++matched;
  }
  return matched == n;
}

std::optional<double> em_or_null(std::span<const PredictionRecord> records, std::size_t n, std::size_t k) {
  try {
    return exact_match(records, n, k);
  } catch (const EmptyRecordSet&) {
    return std::nullopt;
  }
}

EmTable em_table(std::span<const PredictionRecord> records) {
  EmTable t;
  for (int k : {1, 5}) {
    double sum = 0;
    int have = 0;
    for (int n = 1; n <= 5; ++n) {
      auto v = em_or_null(records, static_cast<std::size_t>(n), static_cast<std::size_t>(k));
      t.em[{n, k}] = v;
      if (v) {
        sum += *v;
        ++have;
      }
    }
    t.total[k] = have ? std::optional<double>(sum / have) : std::nullopt;
  }
  return t;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json em_json(const EmTable& t) {
  nlohmann::json j;
  for (const auto& [nk, v] : t.em) j["top" + std::to_string(nk.second)]["@" + std::to_string(nk.first)] = opt(v);
  for (const auto& [k, v] : t.total) j["top" + std::to_string(k)]["total"] = opt(v);
  return j;
}

nlohmann::json edge_json(double x) {
  if (std::isinf(x)) return nullptr;
  return x;
}

std::string fmt(const std::optional<double>& v, int prec = 1) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, *v);
  return buf;
}

std::string edge_str(double x) {
  if (std::isinf(x)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

}  // namespace

double exact_match(std::span<const PredictionRecord> records, std::size_t n, std::size_t k) {
  if (n == 0 || k == 0) throw Error("exact_match needs N >= 1 and k >= 1");
  std::size_t eligible = 0;
  std::size_t hits = 0;
  for (const auto& r : records) {
    if (r.ground_truth.size() < n) continue;
    ++eligible;
    const std::size_t upto = std::min(k, r.hypotheses.size());
    for (std::size_t i = 0; i < upto; ++i) {
      if (prefix_hit(r.hypotheses[i], r.ground_truth, n)) {
        ++hits;
        break;
      }
    }
  }
  if (eligible == 0) throw EmptyRecordSet();
  return 100.0 * static_cast<double>(hits) / static_cast<double>(eligible);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

RougeL rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) throw EmptySequence();
  const double l = static_cast<double>(lcs_length(candidate, reference));
  RougeL r;
  r.precision = l / static_cast<double>(candidate.size());
  r.recall = l / static_cast<double>(reference.size());
  r.f1 = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

std::u32string code_points(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t j = 1; ok && j < len; ++j) ok = (static_cast<unsigned char>(s[i + j]) & 0xC0) == 0x80;
    if (!ok) {
      out.push_back(0xDC00 + c);  // lone surrogate range: cannot collide with valid text
      ++i;
      continue;
    }
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    for (std::size_t j = 1; j < len; ++j) cp = (cp << 6) | (static_cast<unsigned char>(s[i + j]) & 0x3F);
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double edit_similarity(std::string_view candidate, std::string_view reference) {
  const auto c = code_points(candidate);
  const auto r = code_points(reference);
  const std::size_t longest = std::max(c.size(), r.size());
  if (longest == 0) return 100.0;
  return 100.0 * (1.0 - static_cast<double>(levenshtein(c, r)) / static_cast<double>(longest));
}

double bleu4(std::span<const Tokens> candidates, std::span<const Tokens> references) {
  if (candidates.empty()) throw EmptyCorpus();
  if (candidates.size() != references.size()) throw Error("bleu4: candidate and reference counts differ");
  double matched[5] = {0, 0, 0, 0, 0};
  double total[5] = {0, 0, 0, 0, 0};
  double cand_len = 0;
  double ref_len = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const Tokens& c = candidates[s];
    const Tokens& r = references[s];
    cand_len += static_cast<double>(c.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<std::string>, std::size_t> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[Tokens(r.begin() + i, r.begin() + i + n)];
      std::map<std::vector<std::string>, std::size_t> cand_counts;
      for (std::size_t i = 0; i + n <= c.size(); ++i) ++cand_counts[Tokens(c.begin() + i, c.begin() + i + n)];
      for (const auto& [gram, count] : cand_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched[n] += static_cast<double>(std::min(count, it->second));
        total[n] += static_cast<double>(count);
      }
    }
  }
  if (total[1] == 0 || matched[1] == 0) return 0.0;
  double log_sum = std::log(matched[1] / total[1]);
  for (int n = 2; n <= 4; ++n) log_sum += std::log((matched[n] + 1) / (total[n] + 1));
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

double perplexity(std::span<const std::vector<double>> logprobs) {
  double sum = 0;
  std::size_t count = 0;
  for (const auto& seq : logprobs) {
    for (double lp : seq) {
      if (lp > 0) throw Error("log-probability above zero: " + std::to_string(lp));
      sum += lp;
      ++count;
    }
  }
  if (count == 0) throw NoTokens();
  return std::exp(-sum / static_cast<double>(count));
}

std::string dedent(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= text.size();) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(text.substr(pos, end - pos));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  std::optional<std::string_view> common;
  for (auto line : lines) {
    const auto first = line.find_first_not_of(" \t\r\f");
    if (first == std::string_view::npos) continue;
    const auto ws = line.substr(0, first);
    if (!common) {
      common = ws;
    } else {
      std::size_t i = 0;
      while (i < common->size() && i < ws.size() && (*common)[i] == ws[i]) ++i;
      common = common->substr(0, i);
    }
  }
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = lines[i];
    if (common && line.substr(0, common->size()) == *common) {
      line.remove_prefix(common->size());
    } else if (line.find_first_not_of(" \t\r\f") == std::string_view::npos) {
      line = {};
    }
    out += line;
    if (i + 1 < lines.size()) out += '\n';
  }
  return out;
}

bool is_function_definition(std::string_view text) {
  try {
    const Module m = parse_module(dedent(text));
    return !m.body.empty() && m.body.front().kind == StmtKind::FunctionDef;
  } catch (const Error&) {
    return false;
  }
}

double syntax_ok_rate(std::span<const std::string> texts) {
  if (texts.empty()) throw EmptyList();
  const auto ok = std::count_if(texts.begin(), texts.end(), [](const std::string& t) { return is_function_definition(t); });
  return 100.0 * static_cast<double>(ok) / static_cast<double>(texts.size());
}

std::string_view to_string(BinKey key) { return key == BinKey::ContextLen ? "context_len" : "sameline_len"; }

std::vector<double> default_edges(BinKey key) {
  std::vector<double> e;
  if (key == BinKey::ContextLen) {
    for (int x = 0; x <= 1024; x += 128) e.push_back(x);
  } else {
    for (int x = 0; x <= 16; x += 2) e.push_back(x);
  }
  return e;
}

std::vector<BinReport> binned_report(std::span<const PredictionRecord> records, BinKey key,
                                     std::span<const double> edges) {
  if (edges.empty()) throw BadEdges("no edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (std::isnan(edges[i])) throw BadEdges("NaN edge");
    if (i > 0 && !(edges[i] > edges[i - 1])) throw BadEdges("edges must strictly increase");
  }
  std::vector<double> bounds;
  if (edges.front() > 0) bounds.push_back(0);
  bounds.insert(bounds.end(), edges.begin(), edges.end());
  if (!std::isinf(bounds.back())) bounds.push_back(std::numeric_limits<double>::infinity());

  std::vector<BinReport> out;
  std::vector<std::vector<PredictionRecord>> members(bounds.size() - 1);
  for (std::size_t b = 0; b + 1 < bounds.size(); ++b) out.push_back({bounds[b], bounds[b + 1], 0, std::nullopt});
  for (const auto& r : records) {
    const double v = static_cast<double>(key == BinKey::ContextLen ? r.context_len : r.sameline_len);
    for (std::size_t b = 0; b < out.size(); ++b) {
      if (v >= out[b].lo && v < out[b].hi) {
        members[b].push_back(r);
        break;
      }
    }
  }
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].count = members[b].size();
    if (!members[b].empty()) out[b].em = em_table(members[b]);
  }
  return out;
}

MetricReport make_report(std::span<const PredictionRecord> all, const ReportOptions& options) {
  std::vector<PredictionRecord> records;
  MetricReport rep;
  for (const auto& r : all) {
    if (r.error) {
      ++rep.failed;
    } else {
      records.push_back(r);
    }
  }
  rep.records = records.size();
  if (records.empty()) throw EmptyRecordSet();
  rep.em = em_table(records);

  std::vector<Tokens> cands, refs;
  double p = 0, r = 0, es = 0;
  bool all_logprobs = true;
  std::vector<std::vector<double>> lps;
  std::vector<std::string> texts;
  for (const auto& rec : records) {
    const Tokens cand = rec.hypotheses.empty() ? Tokens{} : content(rec.hypotheses.front());
    const Tokens ref = content(rec.ground_truth);
    if (!cand.empty() && !ref.empty()) {
      const RougeL x = rouge_l(cand, ref);
      p += x.precision;
      r += x.recall;
    }
    es += edit_similarity(decode_canonical(cand), decode_canonical(ref));
    cands.push_back(cand);
    refs.push_back(ref);
    if (rec.logprobs) {
      lps.push_back(*rec.logprobs);
    } else {
      all_logprobs = false;
    }
    if (options.syntax_check && !rec.hypotheses.empty()) texts.push_back(decode_canonical(rec.hypotheses.front()));
  }
  const double n = static_cast<double>(records.size());
  rep.rouge_l.precision = p / n;
  rep.rouge_l.recall = r / n;
  const double pr = rep.rouge_l.precision + rep.rouge_l.recall;
  rep.rouge_l.f1 = pr > 0 ? 2 * rep.rouge_l.precision * rep.rouge_l.recall / pr : 0.0;
  rep.edit_similarity = es / n;
  rep.bleu4 = bleu4(cands, refs);
  if (all_logprobs) {
    try {
      rep.ppl = perplexity(lps);
    } catch (const NoTokens&) {
    }
  }
  if (options.syntax_check && !texts.empty()) rep.syntax_ok = syntax_ok_rate(texts);

  auto bins = options.bins;
  if (bins.empty()) {
    bins = {{BinKey::ContextLen, default_edges(BinKey::ContextLen)},
            {BinKey::SamelineLen, default_edges(BinKey::SamelineLen)}};
  }
  for (const auto& [key, edges] : bins) rep.bins.emplace_back(key, binned_report(records, key, edges));
  return rep;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["records"] = records;
  j["failed"] = failed;
  j["exact_match"] = em_json(em);
  j["rouge_l"] = {{"precision", rouge_l.precision}, {"recall", rouge_l.recall}, {"f1", rouge_l.f1}};
  j["edit_similarity"] = edit_similarity;
  j["bleu4"] = bleu4;
  j["ppl"] = opt(ppl);
  j["syntax_ok"] = opt(syntax_ok);
  j["meta"] = {{"bleu_smoothing", kBleuSmoothing},
               {"ppl_log_base", "e"},
               {"rouge_aggregation", "macro mean over records; f1 from the macro precision and recall"},
               {"em_total", "mean of EM@1..5 over each N's eligible records"}};
  nlohmann::json bj = nlohmann::json::object();
  for (const auto& [key, list] : bins) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : list) {
      arr.push_back({{"lo", edge_json(b.lo)},
                     {"hi", edge_json(b.hi)},
                     {"count", b.count},
                     {"exact_match", b.em ? em_json(*b.em) : nlohmann::json(nullptr)}});
    }
    bj[std::string(to_string(key))] = arr;
  }
  j["bins"] = bj;
  return j;
}

std::string MetricReport::render_table() const {
  std::ostringstream os;
  os << "records " << records << " (failed " << failed << ")\n\n";
  os << "        EM@1   EM@2   EM@3   EM@4   EM@5   Total\n";
  for (int k : {1, 5}) {
    char label[16];
    std::snprintf(label, sizeof label, "top-%d ", k);
    os << label;
    for (int n = 1; n <= 5; ++n) {
      char cell[16];
      std::snprintf(cell, sizeof cell, " %6s", fmt(em.em.at({n, k})).c_str());
      os << cell;
    }
    char cell[16];
    std::snprintf(cell, sizeof cell, "  %6s", fmt(em.total.at(k)).c_str());
    os << cell << "\n";
  }
  os << "\nROUGE-L P " << fmt(rouge_l.precision, 4) << "  R " << fmt(rouge_l.recall, 4) << "  F1 "
     << fmt(rouge_l.f1, 4) << "\n";
  os << "edit similarity " << fmt(edit_similarity, 2) << "\n";
  os << "BLEU-4 " << fmt(bleu4, 4) << "\n";
  os << "PPL " << fmt(ppl, 3) << "\n";
  os << "syntax ok " << fmt(syntax_ok, 1) << "\n";
  for (const auto& [key, list] : bins) {
    os << "\n" << to_string(key) << "\n                         top-1 EM@1  EM@5   top-5 EM@1  EM@5\n";
    os << "  bin              count\n";
    for (const auto& b : list) {
      const std::string range = "[" + edge_str(b.lo) + ", " + edge_str(b.hi) + ")";
      auto cell = [&](int n, int k) { return b.em ? fmt(b.em->em.at({n, k})) : std::string("-"); };
      char line[128];
      std::snprintf(line, sizeof line, "  %-16s %5zu %11s %6s %12s %6s\n", range.c_str(), b.count, cell(1, 1).c_str(),
                    cell(5, 1).c_str(), cell(1, 5).c_str(), cell(5, 5).c_str());
      os << line;
    }
  }
  return os.str();
}

}  // namespace ewash
