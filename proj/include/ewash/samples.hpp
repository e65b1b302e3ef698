#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ewash/packer.hpp"
#include "ewash/syntax_model.hpp"
#include "ewash/tokenizer.hpp"
#include "json.hpp"

namespace ewash {

enum class TaskKind { CodeCompletion, MethodCompletion, DocstringCompletion };

std::string_view to_string(TaskKind kind);
/// Accepts "code", "method", "docstring" and the enum names.
TaskKind task_kind_from_string(std::string_view name);

inline constexpr const char* kTargetBodyCode = "# target body";
inline constexpr const char* kTargetDocstringCode = "# target docstring";
inline constexpr std::size_t kGroundTruthTokens = 5;

struct TrainingSample {
  TaskKind task = TaskKind::CodeCompletion;
  std::string file;
  std::string focal;
  std::size_t window_index = 0;
  TokenSeq source;
  TokenSeq target;
  std::string tokenizer_id;
  bool normalized = false;

  nlohmann::json to_json() const;
  static TrainingSample from_json(const nlohmann::json& j);
};

struct SampleConfig {
  TokenBudget budget;
  PackOptions pack;  // control code and focal-docstring exclusion are set per task
};

/// Focal body as it sits in the file: indentation of its first line, then
/// the body text.
std::string focal_body_text(const FileSkeleton& skeleton, const MethodRecord& focal);

/// Rolling windows over the focal body. Throws BudgetTooSmall.
std::vector<TrainingSample> gen_code_completion(const FileSkeleton& skeleton,
                                                const MethodRecord& focal,
                                                const SampleConfig& cfg, const Tokenizer& tok);

TrainingSample gen_method_completion(const FileSkeleton& skeleton, const MethodRecord& focal,
                                     const SampleConfig& cfg, const Tokenizer& tok);

/// Absent when the focal method has no docstring. The target is never
/// literal-normalized, whatever `tok` does.
std::optional<TrainingSample> gen_docstring_completion(const FileSkeleton& skeleton,
                                                       const MethodRecord& focal,
                                                       const SampleConfig& cfg,
                                                       const Tokenizer& tok);

struct PromptPoint {
  std::size_t pos = 0;       // index into the body tokens
  std::size_t sameline = 0;  // non-whitespace tokens before pos on its line
};

/// Prompts of one focal method, stored compactly: every prompt shares the
/// context and body.
struct MethodPrompts {
  std::string file;
  std::string focal;
  TokenSeq context;
  TokenSeq body;
  std::vector<PromptPoint> points;

  nlohmann::json to_json() const;
  static MethodPrompts from_json(const nlohmann::json& j);
};

/// One expanded prompt.
struct EvalPrompt {
  std::string id;  // file::focal::pos
  std::vector<std::string> prompt;
  std::vector<std::string> ground_truth;  // up to 5 non-whitespace tokens
  std::size_t context_len = 0;
  std::size_t sameline_len = 0;
};

/// Prompt points of a body: every non-whitespace token whose index on its
/// physical line is at least 2.
std::vector<PromptPoint> prompt_points(const TokenSeq& body);

/// Packs the context and lists the prompt points. Throws BudgetTooSmall.
MethodPrompts gen_eval_prompts(const FileSkeleton& skeleton, const MethodRecord& focal,
                               const SampleConfig& cfg, const Tokenizer& tok);

/// Full prompts; the body prefix is cut from the left so that each prompt
/// plus its ground truth fits `total_budget`.
std::vector<EvalPrompt> expand(const MethodPrompts& mp, std::size_t total_budget);

struct SkipCounts {
  std::size_t budget_too_small = 0;
  std::size_t methods = 0;
  std::size_t methods_with_docstring = 0;
};

/// All samples of `task` for one file. Methods whose level-0 context does
/// not fit are skipped and counted.
std::vector<TrainingSample> gen_file_samples(const FileSkeleton& skeleton, TaskKind task,
                                             const SampleConfig& cfg, const Tokenizer& tok,
                                             SkipCounts& counts);

nlohmann::json sample_header(TaskKind task, const SampleConfig& cfg, const Tokenizer& tok);
nlohmann::json prompts_header(const SampleConfig& cfg, const Tokenizer& tok);

}  // namespace ewash
