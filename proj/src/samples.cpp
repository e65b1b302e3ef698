#include "ewash/samples.hpp"

#include <algorithm>

#include "ewash/errors.hpp"

namespace ewash {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::CodeCompletion:
      return "CodeCompletion";
    case TaskKind::MethodCompletion:
      return "MethodCompletion";
    case TaskKind::DocstringCompletion:
      return "DocstringCompletion";
  }
  return "CodeCompletion";
}

TaskKind task_kind_from_string(std::string_view name) {
  if (name == "code" || name == "CodeCompletion") return TaskKind::CodeCompletion;
  if (name == "method" || name == "MethodCompletion") return TaskKind::MethodCompletion;
  if (name == "docstring" || name == "DocstringCompletion") return TaskKind::DocstringCompletion;
  throw Error("unknown task: " + std::string(name));
}

namespace {

nlohmann::json tokens_json(const TokenSeq& seq) { return seq.tokens; }

TokenSeq tokens_from(const nlohmann::json& j) {
  TokenSeq s;
  s.tokens = j.get<std::vector<std::string>>();
  return s;
}

// context, then a newline token, then `tail`
TokenSeq join_context(const TokenSeq& context, const TokenSeq& tail) {
  TokenSeq out = context;
  out.push("\n", TokenKind::Newline);
  out.append(tail);
  return out;
}

bool has_newline(std::string_view s) { return s.find('\n') != std::string_view::npos || s.find('\r') != std::string_view::npos; }

}  // namespace

nlohmann::json TrainingSample::to_json() const {
  return {{"task", to_string(task)},
          {"file", file},
          {"focal", focal},
          {"window_index", window_index},
          {"source_tokens", tokens_json(source)},
          {"target_tokens", tokens_json(target)},
          {"tokenizer_id", tokenizer_id},
          {"normalized", normalized}};
}

TrainingSample TrainingSample::from_json(const nlohmann::json& j) {
  TrainingSample s;
  s.task = task_kind_from_string(j.at("task").get<std::string>());
  s.file = j.at("file").get<std::string>();
  s.focal = j.at("focal").get<std::string>();
  s.window_index = j.at("window_index").get<std::size_t>();
  s.source = tokens_from(j.at("source_tokens"));
  s.target = tokens_from(j.at("target_tokens"));
  s.tokenizer_id = j.at("tokenizer_id").get<std::string>();
  s.normalized = j.at("normalized").get<bool>();
  return s;
}

std::string focal_body_text(const FileSkeleton& skeleton, const MethodRecord& focal) {
  return skeleton.indented_text(focal.body_id);
}

std::vector<TrainingSample> gen_code_completion(const FileSkeleton& skeleton,
                                                const MethodRecord& focal,
                                                const SampleConfig& cfg, const Tokenizer& tok) {
  cfg.budget.validate();
  PackOptions po = cfg.pack;
  po.control_code.reset();
  po.exclude_focal_docstring = false;
  // one token of the context budget pays for the newline before the body
  const PackedContext ctx = pack(skeleton, focal, cfg.budget.context - 1, tok, po);
  const TokenSeq body = tok.encode(focal_body_text(skeleton, focal));
  const std::size_t w = cfg.budget.body_window;
  const std::size_t windows = std::max<std::size_t>(1, (body.size() + w - 1) / w);

  std::vector<TrainingSample> out;
  for (std::size_t i = 0; i < windows; ++i) {
    const std::size_t first = i * w;
    const std::size_t last = std::min(body.size(), first + w);
    const std::size_t room = cfg.budget.total - (ctx.tokens_used + 1) - (last - first);
    const std::size_t tail = std::min(first, room);
    TrainingSample s;
    s.task = TaskKind::CodeCompletion;
    s.file = skeleton.source().path();
    s.focal = focal.qualified_name;
    s.window_index = i;
    s.source = join_context(ctx.rendered, body.slice(first - tail, last));
    s.target = body.slice(first, last);
    s.tokenizer_id = tok.id();
    s.normalized = tok.normalizing();
    out.push_back(std::move(s));
  }
  return out;
}

TrainingSample gen_method_completion(const FileSkeleton& skeleton, const MethodRecord& focal,
                                     const SampleConfig& cfg, const Tokenizer& tok) {
  cfg.budget.validate();
  PackOptions po = cfg.pack;
  po.control_code = kTargetBodyCode;
  po.exclude_focal_docstring = false;
  const PackedContext ctx = pack(skeleton, focal, cfg.budget.context, tok, po);
  TrainingSample s;
  s.task = TaskKind::MethodCompletion;
  s.file = skeleton.source().path();
  s.focal = focal.qualified_name;
  s.source = ctx.rendered;
  s.target = tok.encode(focal_body_text(skeleton, focal));
  s.tokenizer_id = tok.id();
  s.normalized = tok.normalizing();
  return s;
}

std::optional<TrainingSample> gen_docstring_completion(const FileSkeleton& skeleton,
                                                       const MethodRecord& focal,
                                                       const SampleConfig& cfg,
                                                       const Tokenizer& tok) {
  if (!focal.docstring_id) return std::nullopt;
  cfg.budget.validate();
  PackOptions po = cfg.pack;
  po.control_code = kTargetDocstringCode;
  po.exclude_focal_docstring = true;
  const PackedContext ctx = pack(skeleton, focal, cfg.budget.context, tok, po);

  // The body goes right under the signature, cut to what the total budget
  // leaves (one token for its leading newline).
  const TokenSeq body = tok.encode(focal_body_text(skeleton, focal));
  std::size_t keep = std::min(body.size(), cfg.budget.total - std::min(cfg.budget.total, ctx.tokens_used + 1));
  TokenSeq source;
  while (true) {
    RenderOptions ro = ctx.render_options;
    if (keep > 0) ro.after_anchor = tok.decode(body.slice(0, keep));
    source = tok.encode(render_text(skeleton, ctx.pieces, ro));
    if (source.size() <= cfg.budget.total || keep == 0) break;
    keep -= std::min(keep, source.size() - cfg.budget.total);
  }

  TrainingSample s;
  s.task = TaskKind::DocstringCompletion;
  s.file = skeleton.source().path();
  s.focal = focal.qualified_name;
  s.source = std::move(source);
  s.target = tok.base().encode(skeleton.indented_text(*focal.docstring_id));
  s.tokenizer_id = tok.id();
  s.normalized = tok.normalizing();
  return s;
}

std::vector<PromptPoint> prompt_points(const TokenSeq& body) {
  std::vector<PromptPoint> out;
  const bool typed = body.kinds.size() == body.size();
  const bool trivia = body.has_provenance();
  std::size_t on_line = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (trivia && has_newline(body.trivia[i])) on_line = 0;
    const bool ws = typed ? is_whitespace(body.kinds[i]) : is_whitespace_token(body.tokens[i]);
    if (ws) {
      if (has_newline(body.tokens[i])) on_line = 0;
      continue;
    }
    if (on_line >= 2) out.push_back({i, on_line});
    ++on_line;
    if (has_newline(body.tokens[i])) on_line = 0;  // multi-line string ends on a later line
  }
  return out;
}

MethodPrompts gen_eval_prompts(const FileSkeleton& skeleton, const MethodRecord& focal,
                               const SampleConfig& cfg, const Tokenizer& tok) {
  cfg.budget.validate();
  PackOptions po = cfg.pack;
  po.control_code.reset();
  po.exclude_focal_docstring = false;
  MethodPrompts mp;
  mp.file = skeleton.source().path();
  mp.focal = focal.qualified_name;
  mp.context = pack(skeleton, focal, cfg.budget.context - 1, tok, po).rendered;
  mp.body = tok.encode(focal_body_text(skeleton, focal));
  mp.points = prompt_points(mp.body);
  return mp;
}

std::vector<EvalPrompt> expand(const MethodPrompts& mp, std::size_t total_budget) {
  std::vector<EvalPrompt> out;
  out.reserve(mp.points.size());
  const std::size_t head = mp.context.size() + 1;
  for (const PromptPoint& pt : mp.points) {
    EvalPrompt e;
    e.id = mp.file + "::" + mp.focal + "::" + std::to_string(pt.pos);
    e.sameline_len = pt.sameline;
    for (std::size_t j = pt.pos; j < mp.body.size() && e.ground_truth.size() < kGroundTruthTokens; ++j) {
      if (!is_whitespace_token(mp.body.tokens[j])) e.ground_truth.push_back(mp.body.tokens[j]);
    }
    const std::size_t room = total_budget > head + kGroundTruthTokens ? total_budget - head - kGroundTruthTokens : 0;
    const std::size_t first = pt.pos > room ? pt.pos - room : 0;
    e.prompt = mp.context.tokens;
    e.prompt.emplace_back("\n");
    e.prompt.insert(e.prompt.end(), mp.body.tokens.begin() + static_cast<std::ptrdiff_t>(first),
                    mp.body.tokens.begin() + static_cast<std::ptrdiff_t>(pt.pos));
    e.context_len = e.prompt.size();
    out.push_back(std::move(e));
  }
  return out;
}

nlohmann::json MethodPrompts::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) pts.push_back({{"pos", p.pos}, {"sameline", p.sameline}});
  return {{"file", file}, {"focal", focal}, {"context", context.tokens}, {"body", body.tokens}, {"prompts", pts}};
}

MethodPrompts MethodPrompts::from_json(const nlohmann::json& j) {
  MethodPrompts mp;
  mp.file = j.at("file").get<std::string>();
  mp.focal = j.at("focal").get<std::string>();
  mp.context = tokens_from(j.at("context"));
  mp.body = tokens_from(j.at("body"));
  for (const auto& p : j.at("prompts")) {
    mp.points.push_back({p.at("pos").get<std::size_t>(), p.at("sameline").get<std::size_t>()});
  }
  return mp;
}

std::vector<TrainingSample> gen_file_samples(const FileSkeleton& skeleton, TaskKind task,
                                             const SampleConfig& cfg, const Tokenizer& tok,
                                             SkipCounts& counts) {
  std::vector<TrainingSample> out;
  for (const MethodRecord& m : skeleton.methods()) {
    ++counts.methods;
    if (m.docstring_id) ++counts.methods_with_docstring;
    try {
      switch (task) {
        case TaskKind::CodeCompletion: {
          auto windows = gen_code_completion(skeleton, m, cfg, tok);
          out.insert(out.end(), std::make_move_iterator(windows.begin()), std::make_move_iterator(windows.end()));
          break;
        }
        case TaskKind::MethodCompletion:
          out.push_back(gen_method_completion(skeleton, m, cfg, tok));
          break;
        case TaskKind::DocstringCompletion:
          if (auto s = gen_docstring_completion(skeleton, m, cfg, tok)) out.push_back(std::move(*s));
          break;
      }
    } catch (const BudgetTooSmall&) {
      ++counts.budget_too_small;
    }
  }
  return out;
}

nlohmann::json sample_header(TaskKind task, const SampleConfig& cfg, const Tokenizer& tok) {
  return {{"schema", "ewash-sample-v1"},
          {"task", to_string(task)},
          {"tokenizer_id", tok.id()},
          {"normalized", tok.normalizing()},
          {"budget", {{"total", cfg.budget.total}, {"context", cfg.budget.context}, {"body_window", cfg.budget.body_window}}}};
}

nlohmann::json prompts_header(const SampleConfig& cfg, const Tokenizer& tok) {
  return {{"schema", "ewash-prompts-v1"},
          {"tokenizer_id", tok.id()},
          {"normalized", tok.normalizing()},
          {"ground_truth_tokens", kGroundTruthTokens},
          {"budget", {{"total", cfg.budget.total}, {"context", cfg.budget.context}, {"body_window", cfg.budget.body_window}}}};
}

}  // namespace ewash
