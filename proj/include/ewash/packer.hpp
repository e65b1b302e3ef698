#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ewash/syntax_model.hpp"
#include "ewash/tokenizer.hpp"
#include "json.hpp"

namespace ewash {

/// Priority levels, lower is packed first:
///   0 focal signature, decorators, docstring and the enclosing class header
///   1 imports
///   2 global assignment targets
///   3 attributes of the focal class
///   4 peer method signatures; headers of other classes
///   5 focal class docstring
///   6 peer method docstrings
///   7 global expressions, assignment values, peer bodies, other classes' members
using PriorityLevel = int;
inline constexpr PriorityLevel kMaxLevel = 7;

struct TokenBudget {
  std::size_t total = 1024;
  std::size_t context = 768;
  std::size_t body_window = 256;

  /// Throws Error unless context + body_window == total and all are positive.
  void validate() const;
};

enum class SelectionPolicy {
  Prefix,        // stop at the first unit that does not fit
  SkipContinue,  // skip it and keep trying later units
};

struct PackOptions {
  SelectionPolicy policy = SelectionPolicy::Prefix;
  bool exclude_focal_docstring = false;
  std::optional<std::string> elision_marker;  // e.g. "# ..."
  /// Comment line placed directly above the focal `def` line; its tokens are
  /// charged to the context budget.
  std::optional<std::string> control_code;
};

/// Which part of an element is rendered. Assignments can be cut at the
/// split token so their target is kept without the value.
enum class Part { Whole, Target, Value };

struct SelectedElement {
  ElementId id;
  PriorityLevel level;
  Part part;
  friend bool operator==(const SelectedElement&, const SelectedElement&) = default;
};

struct RenderPiece {
  ElementId id;
  Part part;  // Whole or Target
  friend bool operator==(const RenderPiece&, const RenderPiece&) = default;
};

/// Extra text around one anchor element at render time.
struct RenderOptions {
  std::optional<std::string> elision_marker;
  std::set<ElementId> ignored;  // never reported as elided
  std::optional<ElementId> anchor;
  std::optional<std::string> before_anchor;  // own line at the anchor's indentation
  std::optional<std::string> after_anchor;   // own line(s) after the anchor piece, verbatim
};

struct PackedContext {
  std::string focal;
  std::vector<SelectedElement> selected;  // in selection order
  std::vector<RenderPiece> pieces;        // in source order
  std::string text;
  TokenSeq rendered;
  std::size_t tokens_used = 0;
  std::set<PriorityLevel> truncated_levels;
  RenderOptions render_options;

  bool has(ElementId id) const;
  nlohmann::json to_json(bool with_text = true) const;
};

/// Level of every selectable element for `focal`. Global assignments map to
/// the level of their target (the value is always level 7). The focal body
/// and anything inside it are absent. Throws FocalNotFound.
std::map<ElementId, PriorityLevel> assign_levels(const FileSkeleton& skeleton,
                                                 const MethodRecord& focal);

/// Greedy priority packing of the context for `focal` within `context_budget`
/// tokens. Throws BudgetTooSmall when the level-0 elements alone do not fit.
PackedContext pack(const FileSkeleton& skeleton, const MethodRecord& focal,
                   std::size_t context_budget, const Tokenizer& tok,
                   const PackOptions& options = {});

/// Text of the pieces in source order, each at its source indentation, one
/// per line. Pieces inside another piece are dropped.
std::string render_text(const FileSkeleton& skeleton, std::vector<RenderPiece> pieces,
                        const RenderOptions& options = {});

TokenSeq render(const FileSkeleton& skeleton, const std::vector<ElementId>& ids,
                const Tokenizer& tok);

}  // namespace ewash
