#include "ewash/harness.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "ewash/errors.hpp"

namespace fs = std::filesystem;

namespace ewash {

std::size_t worker_count(std::optional<std::size_t> requested) {
  if (requested) {
    if (*requested == 0) throw Error("worker count must be positive");
    return *requested;
  }
  if (const char* env = std::getenv("EWASH_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v <= 0) throw Error(std::string("EWASH_WORKERS must be a positive integer, got ") + env);
    return static_cast<std::size_t>(v);
  }
  return 1;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::string> discover(const std::vector<std::string>& roots) {
  std::vector<std::string> out;
  for (const auto& root : roots) {
    std::error_code ec;
    const auto st = fs::status(root, ec);
    if (ec || !fs::exists(st)) throw Error("no such file or directory: " + root);
    if (fs::is_regular_file(st)) {
      out.push_back(root);
      continue;
    }
    for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (ec) break;
      if (it->is_regular_file(ec) && it->path().extension() == ".py") out.push_back(it->path().string());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw NoFilesFound();
  return out;
}

nlohmann::json IngestStats::to_json() const {
  return {{"discovered", discovered},       {"parsed", parsed},     {"syntax_errors", syntax_errors},
          {"timeouts", timeouts},           {"encoding_errors", encoding_errors},
          {"read_errors", read_errors}};
}

IngestResult ingest(const std::vector<std::string>& roots, std::chrono::milliseconds timeout,
                    std::size_t workers) {
  const auto paths = discover(roots);
  enum class Outcome { Parsed, Syntax, Timeout, Encoding, Read };
  std::vector<std::optional<FileSkeleton>> parsed(paths.size());
  std::vector<Outcome> outcome(paths.size(), Outcome::Parsed);
  std::vector<std::string> reason(paths.size());
  parallel_for(paths.size(), workers, [&](std::size_t i) {
    try {
      parsed[i] = parse_file(SourceFile::load(paths[i]), timeout);
    } catch (const ParseTimeout& e) {
      outcome[i] = Outcome::Timeout;
      reason[i] = e.what();
    } catch (const SyntaxError& e) {
      outcome[i] = Outcome::Syntax;
      reason[i] = e.what();
    } catch (const EncodingError& e) {
      outcome[i] = Outcome::Encoding;
      reason[i] = e.what();
    } catch (const std::exception& e) {
      outcome[i] = Outcome::Read;
      reason[i] = e.what();
    }
  });
  IngestResult res;
  res.stats.discovered = paths.size();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    switch (outcome[i]) {
      case Outcome::Parsed:
        ++res.stats.parsed;
        res.skeletons.push_back(std::move(*parsed[i]));
        continue;
      case Outcome::Syntax:
        ++res.stats.syntax_errors;
        break;
      case Outcome::Timeout:
        ++res.stats.timeouts;
        break;
      case Outcome::Encoding:
        ++res.stats.encoding_errors;
        break;
      case Outcome::Read:
        ++res.stats.read_errors;
        break;
    }
    res.failures.push_back({paths[i], reason[i]});
  }
  return res;
}

nlohmann::json RunManifest::to_json() const {
  char stamp[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  nlohmann::json j{{"command", command},
                   {"roots", roots},
                   {"filter", ingest.to_json()},
                   {"methods", methods},
                   {"budget_skips", budget_skips},
                   {"samples", samples},
                   {"prompts", prompts},
                   {"adapter_failures", adapter_failures},
                   {"placeholder_collisions", placeholder_collisions},
                   {"tokenizer_id", tokenizer_id},
                   {"literal_table_hash", literal_table_hash ? nlohmann::json(*literal_table_hash) : nlohmann::json(nullptr)},
                   {"seed", seed},
                   {"workers", workers},
                   {"tool_version", EWASH_VERSION},
                   {"created_at", stamp}};
  if (budget) {
    j["budget"] = {{"total", budget->total}, {"context", budget->context}, {"body_window", budget->body_window}};
  } else {
    j["budget"] = nullptr;
  }
  return j;
}

void RunManifest::write(const std::string& dir) const {
  const fs::path p = fs::path(dir.empty() ? "." : dir) / "run-manifest.json";
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << to_json().dump(2) << "\n";
}

// ---- adapters ---------------------------------------------------------------

Completion EchoOracle::complete(const AdapterRequest& request) {
  auto it = truth_.find(request.id);
  if (it == truth_.end()) throw AdapterFailure("echo oracle has no ground truth for " + request.id);
  Tokens hyp(it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(std::min(request.max_new, it->second.size())));
  Completion c;
  if (request.k > 0) c.hypotheses.push_back(std::move(hyp));
  if (request.score_tokens) c.logprobs = std::vector<double>(request.score_tokens->size(), 0.0);
  return c;
}

std::string ConstantAdapter::id() const {
  std::string s = "constant:";
  for (std::size_t i = 0; i < tokens_.size(); ++i) s += (i ? " " : "") + tokens_[i];
  return s;
}

Completion ConstantAdapter::complete(const AdapterRequest& request) {
  Completion c;
  if (request.k > 0) {
    c.hypotheses.emplace_back(tokens_.begin(), tokens_.begin() + static_cast<std::ptrdiff_t>(std::min(request.max_new, tokens_.size())));
  }
  return c;
}

Completion RandomAdapter::complete(const AdapterRequest& request) {
  Tokens pool;
  if (request.prompt) {
    for (auto it = request.prompt->rbegin(); it != request.prompt->rend() && pool.size() < 64; ++it) {
      if (!is_whitespace_token(*it)) pool.push_back(*it);
    }
  }
  if (pool.empty()) pool.push_back("pass");
  // splitmix64 over (seed, id): portable and independent of call order
  std::uint64_t state = seed_ ^ fnv1a64(request.id);
  auto next = [&state] {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  Completion c;
  for (std::size_t h = 0; h < request.k; ++h) {
    Tokens hyp;
    for (std::size_t t = 0; t < request.max_new; ++t) hyp.push_back(pool[next() % pool.size()]);
    c.hypotheses.push_back(std::move(hyp));
  }
  return c;
}

SubprocessAdapter::SubprocessAdapter(std::string command) : command_(std::move(command)) { start(); }

SubprocessAdapter::~SubprocessAdapter() { stop(); }

void SubprocessAdapter::start() {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) throw AdapterFailure("pipe: " + std::string(std::strerror(errno)));
  const pid_t pid = fork();
  if (pid < 0) throw AdapterFailure("fork: " + std::string(std::strerror(errno)));
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  signal(SIGPIPE, SIG_IGN);
}

void SubprocessAdapter::stop() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

Completion SubprocessAdapter::complete(const AdapterRequest& request) {
  if (to_child_ < 0) throw AdapterFailure("adapter process is not running");
  nlohmann::json req{{"id", request.id},
                     {"prompt_tokens", request.prompt ? *request.prompt : Tokens{}},
                     {"max_new", request.max_new},
                     {"k", request.k}};
  if (request.score_tokens) req["score_tokens"] = *request.score_tokens;
  const std::string line = req.dump() + "\n";
  for (std::size_t off = 0; off < line.size();) {
    const ssize_t n = ::write(to_child_, line.data() + off, line.size() - off);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      stop();
      throw AdapterFailure("adapter process closed its input");
    }
    off += static_cast<std::size_t>(n);
  }
  std::size_t nl;
  while ((nl = buffer_.find('\n')) == std::string::npos) {
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      stop();
      throw AdapterFailure("adapter process exited");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
  const std::string reply = buffer_.substr(0, nl);
  buffer_.erase(0, nl + 1);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::exception&) {
    throw AdapterFailure("adapter reply is not JSON: " + reply.substr(0, 80));
  }
  if (j.contains("error")) throw AdapterFailure("adapter error: " + j["error"].dump());
  Completion c;
  try {
    c.hypotheses = j.at("hypotheses").get<std::vector<Tokens>>();
    if (j.contains("logprobs") && !j["logprobs"].is_null()) c.logprobs = j["logprobs"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw AdapterFailure(std::string("malformed adapter reply: ") + e.what());
  }
  if (c.hypotheses.size() > request.k) c.hypotheses.resize(request.k);
  for (auto& h : c.hypotheses) {
    if (h.size() > request.max_new) h.resize(request.max_new);
  }
  return c;
}

std::unique_ptr<ModelAdapter> make_adapter(const std::string& spec, const std::vector<EvalPrompt>& prompts) {
  if (spec == "echo") {
    std::map<std::string, Tokens> truth;
    for (const auto& p : prompts) truth[p.id] = p.ground_truth;
    return std::make_unique<EchoOracle>(std::move(truth));
  }
  if (spec.rfind("constant:", 0) == 0) {
    Tokens toks;
    std::string word;
    for (char ch : spec.substr(9)) {
      if (ch == ' ') {
        if (!word.empty()) toks.push_back(word);
        word.clear();
      } else {
        word += ch;
      }
    }
    if (!word.empty()) toks.push_back(word);
    return std::make_unique<ConstantAdapter>(std::move(toks));
  }
  if (spec.rfind("random:", 0) == 0) {
    const std::string seed = spec.substr(7);
    char* end = nullptr;
    const unsigned long long v = std::strtoull(seed.c_str(), &end, 10);
    if (seed.empty() || *end != '\0') throw Error("random adapter needs a numeric seed: " + spec);
    return std::make_unique<RandomAdapter>(v);
  }
  if (spec.rfind("cmd:", 0) == 0) return std::make_unique<SubprocessAdapter>(spec.substr(4));
  throw Error("unknown adapter: " + spec);
}

std::vector<EvalPrompt> expand_all(const std::vector<MethodPrompts>& methods, std::size_t total_budget) {
  std::vector<EvalPrompt> out;
  for (const auto& m : methods) {
    auto e = expand(m, total_budget);
    out.insert(out.end(), std::make_move_iterator(e.begin()), std::make_move_iterator(e.end()));
  }
  return out;
}

std::vector<PredictionRecord> run_eval(const std::vector<EvalPrompt>& prompts, ModelAdapter& adapter,
                                       const EvalOptions& options) {
  std::vector<PredictionRecord> out(prompts.size());
  std::mutex serial;
  const std::size_t workers = adapter.thread_safe() ? options.workers : 1;
  parallel_for(prompts.size(), workers, [&](std::size_t i) {
    const EvalPrompt& p = prompts[i];
    PredictionRecord& r = out[i];
    r.id = p.id;
    r.ground_truth = p.ground_truth;
    r.context_len = p.context_len;
    r.sameline_len = p.sameline_len;
    AdapterRequest req;
    req.id = p.id;
    req.prompt = &p.prompt;
    req.max_new = kGroundTruthTokens;
    req.k = options.k;
    if (options.request_logprobs) req.score_tokens = &p.ground_truth;
    try {
      Completion c;
      if (adapter.thread_safe()) {
        c = adapter.complete(req);
      } else {
        std::lock_guard<std::mutex> lock(serial);
        c = adapter.complete(req);
      }
      r.hypotheses = std::move(c.hypotheses);
      r.logprobs = std::move(c.logprobs);
    } catch (const AdapterFailure& e) {
      r.error = e.what();
    }
  });
  return out;
}

namespace {

void sort_samples(std::vector<TrainingSample>& s) {
  std::stable_sort(s.begin(), s.end(), [](const TrainingSample& a, const TrainingSample& b) {
    return std::tie(a.file, a.focal, a.window_index) < std::tie(b.file, b.focal, b.window_index);
  });
}

void add_counts(SkipCounts& into, const SkipCounts& c) {
  into.budget_too_small += c.budget_too_small;
  into.methods += c.methods;
  into.methods_with_docstring += c.methods_with_docstring;
}

}  // namespace

GenOutput generate_samples(const std::vector<FileSkeleton>& files, TaskKind task, const SampleConfig& cfg,
                           const Tokenizer& tok, std::size_t workers) {
  std::vector<std::vector<TrainingSample>> per(files.size());
  std::vector<SkipCounts> counts(files.size());
  parallel_for(files.size(), workers, [&](std::size_t i) {
    per[i] = gen_file_samples(files[i], task, cfg, tok, counts[i]);
  });
  GenOutput out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    add_counts(out.counts, counts[i]);
    out.samples.insert(out.samples.end(), std::make_move_iterator(per[i].begin()), std::make_move_iterator(per[i].end()));
  }
  sort_samples(out.samples);
  return out;
}

GenOutput generate_prompts(const std::vector<FileSkeleton>& files, const SampleConfig& cfg, const Tokenizer& tok,
                           std::size_t workers) {
  std::vector<std::vector<MethodPrompts>> per(files.size());
  std::vector<SkipCounts> counts(files.size());
  parallel_for(files.size(), workers, [&](std::size_t i) {
    for (const MethodRecord& m : files[i].methods()) {
      ++counts[i].methods;
      if (m.docstring_id) ++counts[i].methods_with_docstring;
      try {
        per[i].push_back(gen_eval_prompts(files[i], m, cfg, tok));
      } catch (const BudgetTooSmall&) {
        ++counts[i].budget_too_small;
      }
    }
  });
  GenOutput out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    add_counts(out.counts, counts[i]);
    out.prompts.insert(out.prompts.end(), std::make_move_iterator(per[i].begin()), std::make_move_iterator(per[i].end()));
  }
  std::stable_sort(out.prompts.begin(), out.prompts.end(), [](const MethodPrompts& a, const MethodPrompts& b) {
    return std::tie(a.file, a.focal) < std::tie(b.file, b.focal);
  });
  return out;
}

LiteralTable count_corpus_literals(const std::vector<FileSkeleton>& files, std::size_t workers,
                                   std::size_t max_strings, std::size_t max_numbers) {
  std::vector<LiteralCounts> partial(files.size());
  parallel_for(files.size(), workers, [&](std::size_t i) {
    partial[i].add_file(files[i], static_cast<std::uint32_t>(i));
  });
  LiteralCounts total;
  for (const auto& p : partial) total.merge(p);
  return total.finalize(max_strings, max_numbers);
}

JsonLines read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  JsonLines out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(path + ":" + std::to_string(n) + ": " + e.what());
    }
    if (out.rows.empty() && !out.header && j.is_object() && j.contains("schema")) {
      out.header = std::move(j);
    } else {
      out.rows.push_back(std::move(j));
    }
  }
  return out;
}

void write_jsonl(const std::string& path, const std::optional<nlohmann::json>& header,
                 const std::vector<nlohmann::json>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  if (header) out << header->dump() << "\n";
  for (const auto& r : rows) out << r.dump() << "\n";
  if (!out) throw Error("write failed: " + path);
}

}  // namespace ewash
