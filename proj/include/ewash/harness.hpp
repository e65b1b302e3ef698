#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ewash/literals.hpp"
#include "ewash/metrics.hpp"
#include "ewash/packer.hpp"
#include "ewash/samples.hpp"
#include "ewash/syntax_model.hpp"
#include "json.hpp"

namespace ewash {

/// Worker count: the explicit value if given, else EWASH_WORKERS, else 1.
std::size_t worker_count(std::optional<std::size_t> requested = std::nullopt);

/// Runs fn(0..n-1) on `workers` threads. Exceptions are rethrown after all
/// threads finish (the first by index wins).
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Every *.py file under the roots (a root may also be a single file), in
/// lexicographic path order. Throws Error for a missing root and
/// NoFilesFound when nothing matches.
std::vector<std::string> discover(const std::vector<std::string>& roots);

struct IngestStats {
  std::size_t discovered = 0;
  std::size_t parsed = 0;
  std::size_t syntax_errors = 0;
  std::size_t timeouts = 0;
  std::size_t encoding_errors = 0;
  std::size_t read_errors = 0;

  std::size_t skipped() const { return syntax_errors + timeouts + encoding_errors + read_errors; }
  nlohmann::json to_json() const;
};

struct IngestFailure {
  std::string path;
  std::string reason;
};

struct IngestResult {
  std::vector<FileSkeleton> skeletons;  // discovery order
  IngestStats stats;
  std::vector<IngestFailure> failures;
};

IngestResult ingest(const std::vector<std::string>& roots,
                    std::chrono::milliseconds timeout = std::chrono::seconds(10),
                    std::size_t workers = 1);

struct RunManifest {
  std::string command;
  std::vector<std::string> roots;
  IngestStats ingest;
  std::size_t methods = 0;
  std::size_t budget_skips = 0;
  std::size_t samples = 0;
  std::size_t prompts = 0;
  std::size_t adapter_failures = 0;
  std::size_t placeholder_collisions = 0;
  std::string tokenizer_id;
  std::optional<TokenBudget> budget;
  std::optional<std::string> literal_table_hash;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  bool partial() const { return ingest.skipped() > 0 || budget_skips > 0 || adapter_failures > 0; }
  /// Includes the tool version and a creation timestamp.
  nlohmann::json to_json() const;
  /// Writes `dir/run-manifest.json`.
  void write(const std::string& dir) const;
};

// ---- model adapters -------------------------------------------------------

struct AdapterRequest {
  std::string id;
  const Tokens* prompt = nullptr;
  std::size_t max_new = kGroundTruthTokens;
  std::size_t k = 5;
  const Tokens* score_tokens = nullptr;  // ask for their log-probabilities
};

struct Completion {
  std::vector<Tokens> hypotheses;  // at most k, each at most max_new tokens
  std::optional<std::vector<double>> logprobs;
};

class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;
  /// Throws AdapterFailure.
  virtual Completion complete(const AdapterRequest& request) = 0;
  /// Safe to call from several threads at once.
  virtual bool thread_safe() const { return false; }
  virtual std::string id() const = 0;
};

/// Returns the ground truth of each prompt as its rank-1 hypothesis.
class EchoOracle : public ModelAdapter {
 public:
  explicit EchoOracle(std::map<std::string, Tokens> truth) : truth_(std::move(truth)) {}
  Completion complete(const AdapterRequest& request) override;
  bool thread_safe() const override { return true; }
  std::string id() const override { return "echo"; }

 private:
  std::map<std::string, Tokens> truth_;
};

/// Always proposes the same tokens.
class ConstantAdapter : public ModelAdapter {
 public:
  explicit ConstantAdapter(Tokens tokens) : tokens_(std::move(tokens)) {}
  Completion complete(const AdapterRequest& request) override;
  bool thread_safe() const override { return true; }
  std::string id() const override;

 private:
  Tokens tokens_;
};

/// k hypotheses of tokens drawn from the prompt's last 64 non-whitespace
/// tokens. The draw depends only on the seed and the prompt id.
class RandomAdapter : public ModelAdapter {
 public:
  explicit RandomAdapter(std::uint64_t seed) : seed_(seed) {}
  Completion complete(const AdapterRequest& request) override;
  bool thread_safe() const override { return true; }
  std::string id() const override { return "random:" + std::to_string(seed_); }

 private:
  std::uint64_t seed_;
};

/// Talks line-delimited JSON to a child process started with `/bin/sh -c`.
/// Request: {"id", "prompt_tokens", "max_new", "k", "score_tokens"?}.
/// Response: {"hypotheses": [[tok, ...], ...], "logprobs"?: [...]} or
/// {"error": "..."}.
class SubprocessAdapter : public ModelAdapter {
 public:
  explicit SubprocessAdapter(std::string command);
  ~SubprocessAdapter() override;
  SubprocessAdapter(const SubprocessAdapter&) = delete;
  SubprocessAdapter& operator=(const SubprocessAdapter&) = delete;

  Completion complete(const AdapterRequest& request) override;
  std::string id() const override { return "cmd:" + command_; }

 private:
  void start();
  void stop();

  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

/// "echo", "constant:tok tok ...", "random:SEED" or "cmd:SHELL COMMAND".
/// The echo oracle needs the expanded prompts.
std::unique_ptr<ModelAdapter> make_adapter(const std::string& spec,
                                           const std::vector<EvalPrompt>& prompts);

struct EvalOptions {
  std::size_t k = 5;
  std::size_t total_budget = 1024;
  bool request_logprobs = false;
  std::size_t workers = 1;
};

/// Prompts expanded from all methods, in input order.
std::vector<EvalPrompt> expand_all(const std::vector<MethodPrompts>& methods, std::size_t total_budget);

/// One record per prompt, in prompt order. An adapter failure is stored in
/// the record and the run continues.
std::vector<PredictionRecord> run_eval(const std::vector<EvalPrompt>& prompts, ModelAdapter& adapter,
                                       const EvalOptions& options = {});

// ---- whole-corpus generation ----------------------------------------------

struct GenOutput {
  std::vector<TrainingSample> samples;  // sorted by (file, focal, window_index)
  std::vector<MethodPrompts> prompts;   // sorted by (file, focal)
  SkipCounts counts;
};

GenOutput generate_samples(const std::vector<FileSkeleton>& files, TaskKind task, const SampleConfig& cfg,
                           const Tokenizer& tok, std::size_t workers);
GenOutput generate_prompts(const std::vector<FileSkeleton>& files, const SampleConfig& cfg,
                           const Tokenizer& tok, std::size_t workers);

/// Literal table over the files, counted in parallel and merged in order.
LiteralTable count_corpus_literals(const std::vector<FileSkeleton>& files, std::size_t workers,
                                   std::size_t max_strings = 200, std::size_t max_numbers = 30);

// ---- JSONL ----------------------------------------------------------------

/// Lines of a JSONL file; a first line carrying "schema" is returned apart.
struct JsonLines {
  std::optional<nlohmann::json> header;
  std::vector<nlohmann::json> rows;
};
JsonLines read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::optional<nlohmann::json>& header,
                 const std::vector<nlohmann::json>& rows);

}  // namespace ewash
