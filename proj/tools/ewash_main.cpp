// ewash: corpus ingestion, context packing, sample generation and scoring.
//
//   ewash ingest ROOT...            parse a corpus, write skeletons + manifest
//   ewash count-literals ROOT...    most frequent string/number literals
//   ewash pack --file F --focal Q   print the packed context of one method
//   ewash gen --task T --corpus D   training samples or evaluation prompts
//   ewash run-eval --prompts P      query a model adapter for every prompt
//   ewash score --in PREDS          metric tables on stdout
//   ewash report --in PREDS --out R metric report JSON (+ text tables)
//
// Exit status: 0 success, 1 finished with skipped inputs, 2 fatal error.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ewash/errors.hpp"
#include "ewash/harness.hpp"
#include "ewash/literals.hpp"
#include "ewash/metrics.hpp"
#include "ewash/packer.hpp"
#include "ewash/samples.hpp"
#include "ewash/syntax_model.hpp"
#include "ewash/tokenizer.hpp"

namespace fs = std::filesystem;
using namespace ewash;

namespace {

struct Common {
  std::string tokenizer = "lexical";
  std::optional<std::size_t> workers;
  double timeout_s = 10.0;
  std::size_t context = 768;
  std::size_t total = 1024;
  std::string selection = "prefix";
  std::string elision_marker;
};

void add_budget(CLI::App* cmd, Common& c) {
  cmd->add_option("--context-budget", c.context, "context tokens")->capture_default_str();
  cmd->add_option("--total-budget", c.total, "context + body window tokens")->capture_default_str();
  cmd->add_option("--selection", c.selection, "prefix | skip")
      ->check(CLI::IsMember({"prefix", "skip"}))
      ->capture_default_str();
  cmd->add_option("--elision-marker", c.elision_marker, "comment line marking omitted elements");
  cmd->add_option("--tokenizer", c.tokenizer, "lexical | subword:VOCAB")->capture_default_str();
}

void add_run(CLI::App* cmd, Common& c) {
  cmd->add_option("--workers", c.workers, "threads (default: EWASH_WORKERS or 1)");
  cmd->add_option("--timeout", c.timeout_s, "per-file parse limit, seconds")->capture_default_str();
}

SampleConfig sample_config(const Common& c) {
  if (c.total <= c.context) throw Error("--total-budget must exceed --context-budget");
  SampleConfig cfg;
  cfg.budget = {c.total, c.context, c.total - c.context};
  cfg.budget.validate();
  cfg.pack.policy = c.selection == "skip" ? SelectionPolicy::SkipContinue : SelectionPolicy::Prefix;
  if (!c.elision_marker.empty()) cfg.pack.elision_marker = c.elision_marker;
  return cfg;
}

std::chrono::milliseconds timeout_of(const Common& c) {
  return std::chrono::milliseconds(static_cast<long long>(c.timeout_s * 1000.0));
}

std::string dir_of(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  return parent.empty() ? "." : parent.string();
}

void report_failures(const IngestResult& r) {
  for (const auto& f : r.failures) std::cerr << "skip " << f.path << ": " << f.reason << "\n";
}

std::pair<BinKey, std::vector<double>> parse_bins(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw Error("--bins expects KEY:e0,e1,...");
  const std::string key = spec.substr(0, colon);
  BinKey k;
  if (key == "context" || key == "context_len") {
    k = BinKey::ContextLen;
  } else if (key == "sameline" || key == "sameline_len") {
    k = BinKey::SamelineLen;
  } else {
    throw Error("unknown bin key: " + key);
  }
  std::vector<double> edges;
  std::stringstream ss(spec.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "inf") {
      edges.push_back(std::numeric_limits<double>::infinity());
    } else {
      edges.push_back(std::stod(item));
    }
  }
  return {k, edges};
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::vector<PredictionRecord> recs;
  for (const auto& row : read_jsonl(path).rows) recs.push_back(PredictionRecord::from_json(row));
  return recs;
}

int cmd_ingest(const std::vector<std::string>& roots, const std::string& out, const Common& c) {
  const std::size_t workers = worker_count(c.workers);
  const IngestResult r = ingest(roots, timeout_of(c), workers);
  report_failures(r);
  if (!out.empty()) {
    std::vector<nlohmann::json> rows;
    for (const auto& sk : r.skeletons) rows.push_back(skeleton_to_json(sk));
    write_jsonl(out, nlohmann::json{{"schema", "ewash-skeleton-v1"}}, rows);
  }
  RunManifest m;
  m.command = "ingest";
  m.roots = roots;
  m.ingest = r.stats;
  m.workers = workers;
  for (const auto& sk : r.skeletons) m.methods += sk.methods().size();
  m.write(out.empty() ? "." : dir_of(out));
  std::cout << r.stats.to_json().dump() << "\n";
  return m.partial() ? 1 : 0;
}

int cmd_count_literals(const std::vector<std::string>& roots, const std::string& out, std::size_t top_s,
                       std::size_t top_n, const Common& c) {
  const std::size_t workers = worker_count(c.workers);
  const IngestResult r = ingest(roots, timeout_of(c), workers);
  report_failures(r);
  const LiteralTable t = count_corpus_literals(r.skeletons, workers, top_s, top_n);
  if (out.empty()) {
    std::cout << t.to_json().dump(1) << "\n";
  } else {
    t.save(out);
    std::cerr << "wrote " << out << " (" << t.top_strings.size() << " strings, " << t.top_numbers.size()
              << " numbers, hash " << t.fingerprint() << ")\n";
  }
  return r.stats.skipped() > 0 ? 1 : 0;
}

int cmd_pack(const std::string& file, const std::string& focal, bool as_json, const Common& c) {
  const FileSkeleton sk = parse_file(SourceFile::load(file), timeout_of(c));
  const MethodRecord* m = sk.find_method(focal);
  if (!m) throw FocalNotFound(focal);
  PackOptions po;
  po.policy = c.selection == "skip" ? SelectionPolicy::SkipContinue : SelectionPolicy::Prefix;
  if (!c.elision_marker.empty()) po.elision_marker = c.elision_marker;
  const PackedContext p = pack(sk, *m, c.context, Tokenizer::from_spec(c.tokenizer), po);
  if (as_json) {
    std::cout << p.to_json().dump(2) << "\n";
  } else {
    std::cout << p.text << "\n";
  }
  return 0;
}

int cmd_gen(const std::string& task_name, const std::vector<std::string>& roots, const std::string& out,
            bool normalize, const std::string& table_path, const Common& c) {
  const SampleConfig cfg = sample_config(c);
  const std::size_t workers = worker_count(c.workers);
  const IngestResult r = ingest(roots, timeout_of(c), workers);
  report_failures(r);

  Tokenizer tok = Tokenizer::from_spec(c.tokenizer);
  RunManifest m;
  m.command = "gen " + task_name;
  m.roots = roots;
  m.ingest = r.stats;
  m.budget = cfg.budget;
  m.workers = workers;
  if (normalize) {
    const LiteralTable table =
        table_path.empty() ? count_corpus_literals(r.skeletons, workers) : LiteralTable::load(table_path);
    tok = normalizing_tokenizer(tok, table);
    m.literal_table_hash = table.fingerprint();
    for (const auto& sk : r.skeletons) m.placeholder_collisions += placeholder_collisions(sk.source().text());
    if (m.placeholder_collisions > 0) {
      std::cerr << "warning: placeholder spellings occur " << m.placeholder_collisions << " times in the corpus\n";
    }
  }
  m.tokenizer_id = tok.id();

  GenOutput g;
  std::vector<nlohmann::json> rows;
  std::optional<nlohmann::json> header;
  if (task_name == "prompts") {
    g = generate_prompts(r.skeletons, cfg, tok, workers);
    for (const auto& mp : g.prompts) {
      rows.push_back(mp.to_json());
      m.prompts += mp.points.size();
    }
    header = prompts_header(cfg, tok);
  } else {
    const TaskKind task = task_kind_from_string(task_name);
    g = generate_samples(r.skeletons, task, cfg, tok, workers);
    for (const auto& s : g.samples) rows.push_back(s.to_json());
    m.samples = g.samples.size();
    header = sample_header(task, cfg, tok);
  }
  m.methods = g.counts.methods;
  m.budget_skips = g.counts.budget_too_small;
  write_jsonl(out, header, rows);
  m.write(dir_of(out));
  std::cerr << "wrote " << rows.size() << " rows to " << out << " (files " << r.stats.parsed << "/"
            << r.stats.discovered << ", methods " << g.counts.methods << ", budget skips "
            << g.counts.budget_too_small << ")\n";
  return m.partial() ? 1 : 0;
}

int cmd_run_eval(const std::string& prompts_path, const std::string& adapter_spec, const std::string& out,
                 std::size_t k, bool logprobs, const Common& c) {
  const JsonLines in = read_jsonl(prompts_path);
  std::size_t total = c.total;
  if (in.header && in.header->contains("budget")) total = (*in.header)["budget"].value("total", total);
  std::vector<MethodPrompts> methods;
  for (const auto& row : in.rows) methods.push_back(MethodPrompts::from_json(row));
  const std::vector<EvalPrompt> prompts = expand_all(methods, total);
  auto adapter = make_adapter(adapter_spec, prompts);
  EvalOptions eo;
  eo.k = k;
  eo.total_budget = total;
  eo.request_logprobs = logprobs;
  eo.workers = worker_count(c.workers);
  const auto records = run_eval(prompts, *adapter, eo);

  std::vector<nlohmann::json> rows;
  std::size_t failures = 0;
  for (const auto& rec : records) {
    rows.push_back(rec.to_json());
    if (rec.error) ++failures;
  }
  write_jsonl(out, nlohmann::json{{"schema", "ewash-predictions-v1"}, {"adapter", adapter->id()}, {"k", k}}, rows);

  // fold the evaluation counts into the manifest next to the output
  const fs::path mpath = fs::path(dir_of(out)) / "run-manifest.json";
  nlohmann::json mj = nlohmann::json::object();
  if (fs::exists(mpath)) {
    std::ifstream mi(mpath);
    try {
      mj = nlohmann::json::parse(mi);
    } catch (const nlohmann::json::exception&) {
      mj = nlohmann::json::object();
    }
  }
  mj["eval"] = {{"adapter", adapter->id()}, {"prompts", records.size()}, {"adapter_failures", failures}, {"k", k}};
  std::ofstream(mpath) << mj.dump(2) << "\n";
  std::cerr << "wrote " << records.size() << " predictions to " << out << " (" << failures << " adapter failures)\n";
  return failures > 0 ? 1 : 0;
}

ReportOptions report_options(const std::vector<std::string>& bins, bool syntax) {
  ReportOptions ro;
  for (const auto& b : bins) ro.bins.push_back(parse_bins(b));
  ro.syntax_check = syntax;
  return ro;
}

int cmd_score(const std::string& in, const std::vector<std::string>& bins, bool as_json, bool syntax) {
  const auto recs = load_predictions(in);
  const MetricReport rep = make_report(recs, report_options(bins, syntax));
  if (as_json) {
    std::cout << rep.to_json().dump(2) << "\n";
  } else {
    std::cout << rep.render_table();
  }
  return rep.failed > 0 ? 1 : 0;
}

int cmd_report(const std::string& in, const std::string& out, const std::string& table,
               const std::vector<std::string>& bins, bool syntax) {
  const auto recs = load_predictions(in);
  const MetricReport rep = make_report(recs, report_options(bins, syntax));
  std::ofstream(out) << rep.to_json().dump(2) << "\n";
  const std::string text = rep.render_table();
  if (!table.empty()) std::ofstream(table) << text;
  std::cout << text;
  return rep.failed > 0 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ewash: context packing and evaluation for Python method completion"};
  app.set_version_flag("--version", std::string(EWASH_VERSION));
  app.require_subcommand(1);
  Common c;

  std::vector<std::string> roots;
  std::string out, file, focal, task = "code", table_path, prompts, adapter = "echo", in, table_out;
  std::vector<std::string> bins;
  bool as_json = false, normalize = false, logprobs = false, syntax = false;
  std::size_t top_s = 200, top_n = 30, k = 5;

  auto* ingest_cmd = app.add_subcommand("ingest", "parse a corpus and write file skeletons");
  ingest_cmd->add_option("roots", roots, "directories or files")->required();
  ingest_cmd->add_option("--out", out, "skeleton JSONL");
  add_run(ingest_cmd, c);

  auto* lit_cmd = app.add_subcommand("count-literals", "build the literal frequency table");
  lit_cmd->add_option("roots", roots, "directories or files")->required();
  lit_cmd->add_option("--out", out, "table JSON (stdout if omitted)");
  lit_cmd->add_option("--top-strings", top_s)->capture_default_str();
  lit_cmd->add_option("--top-numbers", top_n)->capture_default_str();
  add_run(lit_cmd, c);

  auto* pack_cmd = app.add_subcommand("pack", "print the packed context of one method");
  pack_cmd->add_option("--file", file)->required();
  pack_cmd->add_option("--focal", focal, "qualified name, e.g. ConvNet.forward")->required();
  pack_cmd->add_flag("--json", as_json, "emit PackedContext metadata");
  add_budget(pack_cmd, c);
  add_run(pack_cmd, c);

  auto* gen_cmd = app.add_subcommand("gen", "generate samples or evaluation prompts");
  gen_cmd->add_option("--task", task, "code | method | docstring | prompts")
      ->check(CLI::IsMember({"code", "method", "docstring", "prompts"}))
      ->capture_default_str();
  gen_cmd->add_option("--corpus", roots, "directories or files")->required();
  gen_cmd->add_option("--out", out)->required();
  gen_cmd->add_flag("--normalize", normalize, "replace literals with placeholder tokens");
  gen_cmd->add_option("--literal-table", table_path, "frozen table (default: count this corpus)");
  add_budget(gen_cmd, c);
  add_run(gen_cmd, c);

  auto* eval_cmd = app.add_subcommand("run-eval", "run a model adapter over evaluation prompts");
  eval_cmd->add_option("--prompts", prompts)->required();
  eval_cmd->add_option("--adapter", adapter, "echo | constant:TOKS | random:SEED | cmd:COMMAND")->capture_default_str();
  eval_cmd->add_option("--out", out)->required();
  eval_cmd->add_option("--k", k)->capture_default_str();
  eval_cmd->add_flag("--logprobs", logprobs, "ask the adapter for ground-truth log-probabilities");
  add_run(eval_cmd, c);

  auto* score_cmd = app.add_subcommand("score", "print metric tables for predictions");
  score_cmd->add_option("--in", in)->required();
  score_cmd->add_option("--bins", bins, "context:0,128,... or sameline:0,2,...");
  score_cmd->add_flag("--json", as_json);
  score_cmd->add_flag("--syntax-ok", syntax, "score top-1 hypotheses as method texts");

  auto* report_cmd = app.add_subcommand("report", "write the metric report");
  report_cmd->add_option("--in", in)->required();
  report_cmd->add_option("--out", out)->required();
  report_cmd->add_option("--table", table_out, "also write the text tables here");
  report_cmd->add_option("--bins", bins);
  report_cmd->add_flag("--syntax-ok", syntax);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(roots, out, c);
    if (*lit_cmd) return cmd_count_literals(roots, out, top_s, top_n, c);
    if (*pack_cmd) return cmd_pack(file, focal, as_json, c);
    if (*gen_cmd) return cmd_gen(task, roots, out, normalize, table_path, c);
    if (*eval_cmd) return cmd_run_eval(prompts, adapter, out, k, logprobs, c);
    if (*score_cmd) return cmd_score(in, bins, as_json, syntax);
    if (*report_cmd) return cmd_report(in, out, table_out, bins, syntax);
  } catch (const std::exception& e) {
    std::cerr << "ewash: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
