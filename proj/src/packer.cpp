#include "ewash/packer.hpp"

#include <algorithm>
#include <unordered_map>

#include "ewash/errors.hpp"

namespace ewash {

void TokenBudget::validate() const {
  if (total == 0 || context == 0 || body_window == 0) throw Error("token budgets must be positive");
  if (context + body_window != total) {
    throw Error("context + body_window must equal total (" + std::to_string(context) + " + " +
                std::to_string(body_window) + " != " + std::to_string(total) + ")");
  }
}

bool PackedContext::has(ElementId id) const {
  return std::any_of(selected.begin(), selected.end(), [&](const auto& s) { return s.id == id; });
}

namespace {

std::string_view part_name(Part p) {
  switch (p) {
    case Part::Whole:
      return "whole";
    case Part::Target:
      return "target";
    case Part::Value:
      return "value";
  }
  return "whole";
}

struct Unit {
  PriorityLevel level;
  std::uint32_t order;  // source position of the unit's main element
  std::vector<RenderPiece> pieces;
  std::vector<SelectedElement> reported;
  std::vector<std::size_t> deps;
};

// Facts about the file relative to one focal method.
struct FocalView {
  const FileSkeleton& sk;
  const MethodRecord& focal;
  std::optional<ElementId> focal_class;
  std::unordered_map<ElementId, const MethodRecord*> method_of;  // sig/doc/body/decorator -> method
  std::unordered_map<ElementId, ElementId> class_decorator_owner;
  Span focal_body;

  FocalView(const FileSkeleton& s, const MethodRecord& f)
      : sk(s), focal(f), focal_class(f.container_class_id), focal_body(s.element(f.body_id).span) {
    for (const auto& m : sk.methods()) {
      method_of[m.signature_id] = &m;
      method_of[m.body_id] = &m;
      if (m.docstring_id) method_of[*m.docstring_id] = &m;
      for (ElementId d : m.decorator_ids) method_of[d] = &m;
    }
    const auto& els = sk.elements();
    for (std::size_t i = 0; i < els.size(); ++i) {
      if (els[i].kind != ElementKind::Decorator || method_of.count(els[i].id)) continue;
      for (std::size_t j = i + 1; j < els.size(); ++j) {
        if (els[j].kind == ElementKind::ClassSignature) {
          class_decorator_owner[els[i].id] = els[j].id;
          break;
        }
      }
    }
  }

  bool inside_focal_body(const CodeElement& e) const { return focal_body.contains(e.span); }

  bool is_focal_part(ElementId id) const {
    auto it = method_of.find(id);
    return it != method_of.end() && it->second == &focal;
  }

  // Peer: a method in the focal class, or a module-level function when the
  // focal method has no class.
  bool is_peer(const MethodRecord& m) const {
    if (&m == &focal) return false;
    return m.container_class_id == focal_class;
  }

  PriorityLevel level_of(const CodeElement& e) const {
    switch (e.kind) {
      case ElementKind::Import:
        return 1;
      case ElementKind::GlobalAssignment:
        return 2;
      case ElementKind::GlobalExpression:
        return 7;
      case ElementKind::ClassSignature:
        return e.id == focal_class ? 0 : 4;
      case ElementKind::ClassDocstring:
        return e.container == focal_class ? 5 : 7;
      case ElementKind::ClassAttribute:
        return focal_class && e.container == focal_class ? 3 : 7;
      case ElementKind::Decorator: {
        if (auto it = class_decorator_owner.find(e.id); it != class_decorator_owner.end()) {
          return it->second == focal_class ? 0 : 4;
        }
        [[fallthrough]];
      }
      case ElementKind::MethodSignature: {
        const MethodRecord& m = *method_of.at(e.id);
        if (&m == &focal) return 0;
        return is_peer(m) ? 4 : 7;
      }
      case ElementKind::MethodDocstring: {
        const MethodRecord& m = *method_of.at(e.id);
        if (&m == &focal) return 0;
        return is_peer(m) ? 6 : 7;
      }
      case ElementKind::MethodBody:
        return 7;
    }
    return 7;
  }
};

const MethodRecord& checked_focal(const FileSkeleton& sk, const MethodRecord& focal) {
  for (const auto& m : sk.methods()) {
    if (&m == &focal) return m;
  }
  for (const auto& m : sk.methods()) {
    if (m == focal) return m;
  }
  throw FocalNotFound(focal.qualified_name);
}

Span piece_span(const FileSkeleton& sk, const RenderPiece& p) {
  const CodeElement& e = sk.element(p.id);
  if (p.part == Part::Target && e.split) return {e.span.start, e.split->start};
  return e.span;
}

std::string piece_text(const FileSkeleton& sk, const RenderPiece& p) {
  const CodeElement& e = sk.element(p.id);
  std::string out(sk.line_indent(e.span.start));
  std::string_view body = sk.text_of(piece_span(sk, p));
  if (p.part == Part::Target) {
    while (!body.empty() && (body.back() == ' ' || body.back() == '\t' || body.back() == '\\' ||
                             body.back() == '\n' || body.back() == '\r')) {
      body.remove_suffix(1);
    }
  }
  out += body;
  return out;
}

bool covers(const FileSkeleton& sk, const RenderPiece& outer, const RenderPiece& inner) {
  if (outer == inner) return false;
  if (outer.part == Part::Target) return false;
  if (outer.id == inner.id) return inner.part == Part::Target;
  return piece_span(sk, outer).contains(piece_span(sk, inner));
}

std::vector<Unit> build_units(const FocalView& v, bool exclude_focal_docstring) {
  const FileSkeleton& sk = v.sk;
  std::vector<Unit> units;
  std::unordered_map<ElementId, std::size_t> unit_of;  // main element -> unit

  auto add_unit = [&](PriorityLevel level, ElementId main, std::vector<RenderPiece> pieces,
                      std::vector<SelectedElement> reported) {
    units.push_back({level, sk.element(main).span.start, std::move(pieces), std::move(reported), {}});
    return units.size() - 1;
  };

  for (const CodeElement& e : sk.elements()) {
    if (v.inside_focal_body(e)) continue;
    if (e.kind == ElementKind::Decorator) continue;  // packed with their owner
    if (exclude_focal_docstring && v.focal.docstring_id && e.id == *v.focal.docstring_id) continue;
    const PriorityLevel level = v.level_of(e);
    std::vector<RenderPiece> pieces;
    std::vector<SelectedElement> reported;
    auto with_decorators = [&](const std::vector<ElementId>& decos) {
      for (ElementId d : decos) {
        pieces.push_back({d, Part::Whole});
        reported.push_back({d, level, Part::Whole});
      }
    };
    if (e.kind == ElementKind::MethodSignature) {
      with_decorators(v.method_of.at(e.id)->decorator_ids);
    } else if (e.kind == ElementKind::ClassSignature) {
      std::vector<ElementId> decos;
      for (const auto& [d, owner] : v.class_decorator_owner) {
        if (owner == e.id) decos.push_back(d);
      }
      std::sort(decos.begin(), decos.end());
      with_decorators(decos);
    }
    if (e.kind == ElementKind::GlobalAssignment && e.split) {
      const std::size_t target = add_unit(2, e.id, {{e.id, Part::Target}}, {{e.id, 2, Part::Target}});
      unit_of[e.id] = target;
      // value: rendered by widening the target piece to the whole statement
      const std::size_t value = add_unit(7, e.id, {{e.id, Part::Whole}}, {{e.id, 7, Part::Value}});
      units[value].order = e.split->start;
      units[value].deps.push_back(target);
      continue;
    }
    pieces.push_back({e.id, Part::Whole});
    reported.push_back({e.id, level, Part::Whole});
    unit_of[e.id] = add_unit(level, e.id, std::move(pieces), std::move(reported));
  }

  // Dependencies: bodies and docstrings need their signature, members of a
  // non-focal class need that class header.
  for (const CodeElement& e : sk.elements()) {
    auto u = unit_of.find(e.id);
    if (u == unit_of.end()) continue;
    if (e.kind == ElementKind::MethodBody || e.kind == ElementKind::MethodDocstring) {
      const MethodRecord* m = v.method_of.at(e.id);
      if (auto s = unit_of.find(m->signature_id); s != unit_of.end()) units[u->second].deps.push_back(s->second);
    }
    if (e.container && e.container != v.focal_class) {
      if (auto c = unit_of.find(*e.container); c != unit_of.end()) units[u->second].deps.push_back(c->second);
    }
  }
  return units;
}

// Rendered piece set with an exact running token count: every piece costs
// its own token count plus one separator newline (the first has none).
class PieceSet {
 public:
  PieceSet(const FileSkeleton& sk, const Tokenizer& tok, const std::optional<std::string>& marker)
      : sk_(sk), tok_(tok), marker_(marker) {}

  std::size_t weight(const RenderPiece& p) {
    const std::uint64_t key = (static_cast<std::uint64_t>(p.id) << 2) | static_cast<std::uint64_t>(p.part);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::size_t w = tok_.count(piece_text(sk_, p)) + 1;
    if (marker_) {
      std::string line(sk_.line_indent(sk_.element(p.id).span.start));
      line += *marker_;
      w += tok_.count(line) + 1;
    }
    cache_.emplace(key, w);
    return w;
  }

  // Cost change if `extra` were added to the current pieces.
  std::ptrdiff_t delta(const std::vector<RenderPiece>& extra) {
    std::vector<RenderPiece> now = active_;
    std::ptrdiff_t d = 0;
    for (const RenderPiece& p : extra) {
      if (std::any_of(now.begin(), now.end(), [&](const RenderPiece& q) { return q == p || covers(sk_, q, p); })) {
        continue;
      }
      d += static_cast<std::ptrdiff_t>(weight(p));
      for (auto it = now.begin(); it != now.end();) {
        if (covers(sk_, p, *it)) {
          d -= static_cast<std::ptrdiff_t>(weight(*it));
          it = now.erase(it);
        } else {
          ++it;
        }
      }
      now.push_back(p);
    }
    return d;
  }

  void add(const std::vector<RenderPiece>& extra) {
    total_ += delta(extra);
    for (const RenderPiece& p : extra) {
      if (std::any_of(active_.begin(), active_.end(), [&](const RenderPiece& q) { return q == p || covers(sk_, q, p); })) {
        continue;
      }
      active_.erase(std::remove_if(active_.begin(), active_.end(),
                                   [&](const RenderPiece& q) { return covers(sk_, p, q); }),
                    active_.end());
      active_.push_back(p);
    }
  }

  // Tokens of the rendered context if `extra` were added.
  std::size_t cost_with(const std::vector<RenderPiece>& extra) {
    const std::ptrdiff_t t = total_ + delta(extra);
    return t > 0 ? static_cast<std::size_t>(t - 1) : 0;
  }

  const std::vector<RenderPiece>& active() const { return active_; }

 private:
  const FileSkeleton& sk_;
  const Tokenizer& tok_;
  const std::optional<std::string>& marker_;
  std::unordered_map<std::uint64_t, std::size_t> cache_;
  std::vector<RenderPiece> active_;
  std::ptrdiff_t total_ = 0;
};

}  // namespace

nlohmann::json PackedContext::to_json(bool with_text) const {
  nlohmann::json sel = nlohmann::json::array();
  for (const auto& s : selected) sel.push_back({{"id", s.id}, {"level", s.level}, {"part", part_name(s.part)}});
  nlohmann::json j{{"focal", focal},
                   {"selected", sel},
                   {"tokens_used", tokens_used},
                   {"truncated_levels", truncated_levels}};
  if (with_text) j["text"] = text;
  return j;
}

std::map<ElementId, PriorityLevel> assign_levels(const FileSkeleton& skeleton,
                                                 const MethodRecord& focal_in) {
  const MethodRecord& focal = checked_focal(skeleton, focal_in);
  const FocalView v(skeleton, focal);
  std::map<ElementId, PriorityLevel> out;
  for (const CodeElement& e : skeleton.elements()) {
    if (v.inside_focal_body(e)) continue;
    out[e.id] = v.level_of(e);
  }
  return out;
}

std::string render_text(const FileSkeleton& sk, std::vector<RenderPiece> pieces,
                        const RenderOptions& options) {
  std::vector<RenderPiece> kept;
  for (const RenderPiece& p : pieces) {
    const bool covered = std::any_of(pieces.begin(), pieces.end(), [&](const RenderPiece& q) {
      return covers(sk, q, p);
    });
    const bool dup = std::find(kept.begin(), kept.end(), p) != kept.end();
    if (!covered && !dup) kept.push_back(p);
  }
  std::sort(kept.begin(), kept.end(), [&](const RenderPiece& a, const RenderPiece& b) {
    return piece_span(sk, a).start < piece_span(sk, b).start;
  });

  std::string out;
  std::uint32_t prev_end = 0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const Span s = piece_span(sk, kept[i]);
    const bool at_anchor = options.anchor && kept[i].id == *options.anchor;
    if (i > 0) out += '\n';
    if (options.elision_marker && i > 0) {
      // something unselected between the previous piece and this one
      const bool gap = std::any_of(sk.elements().begin(), sk.elements().end(), [&](const CodeElement& e) {
        if (options.ignored.count(e.id) || e.span.start < prev_end || e.span.end > s.start) return false;
        return std::none_of(kept.begin(), kept.end(), [&](const RenderPiece& q) {
          return piece_span(sk, q).contains(e.span) || (q.id == e.id);
        });
      });
      if (gap) {
        out += sk.line_indent(s.start);
        out += *options.elision_marker;
        out += '\n';
      }
    }
    if (at_anchor && options.before_anchor) {
      out += sk.line_indent(s.start);
      out += *options.before_anchor;
      out += '\n';
    }
    out += piece_text(sk, kept[i]);
    if (at_anchor && options.after_anchor) {
      out += '\n';
      out += *options.after_anchor;
    }
    prev_end = std::max(prev_end, sk.element(kept[i].id).span.end);
  }
  return out;
}

TokenSeq render(const FileSkeleton& skeleton, const std::vector<ElementId>& ids, const Tokenizer& tok) {
  std::vector<RenderPiece> pieces;
  for (ElementId id : ids) pieces.push_back({id, Part::Whole});
  return tok.encode(render_text(skeleton, pieces));
}

PackedContext pack(const FileSkeleton& skeleton, const MethodRecord& focal_in,
                   std::size_t context_budget, const Tokenizer& tok, const PackOptions& options) {
  const MethodRecord& focal = checked_focal(skeleton, focal_in);
  const FocalView v(skeleton, focal);
  std::vector<Unit> units = build_units(v, options.exclude_focal_docstring);

  std::vector<std::size_t> order(units.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (units[a].level != units[b].level) return units[a].level < units[b].level;
    return units[a].order < units[b].order;
  });

  PieceSet set(skeleton, tok, options.elision_marker);
  std::vector<bool> taken(units.size(), false);
  PackedContext out;
  out.focal = focal.qualified_name;

  // Level 0 goes in as a block.
  std::vector<RenderPiece> level0;
  for (std::size_t u : order) {
    if (units[u].level != 0) break;
    level0.insert(level0.end(), units[u].pieces.begin(), units[u].pieces.end());
  }
  std::size_t control_cost = 0;
  if (options.control_code) {
    std::string line(skeleton.line_indent(skeleton.element(focal.signature_id).span.start));
    line += *options.control_code;
    control_cost = tok.count(line) + 1;
  }
  const std::size_t needed = set.cost_with(level0) + control_cost;
  if (needed > context_budget) throw BudgetTooSmall(needed, context_budget);
  context_budget -= control_cost;

  auto closure = [&](std::size_t u) {
    std::vector<std::size_t> todo{u}, result;
    std::vector<bool> seen(units.size(), false);
    while (!todo.empty()) {
      const std::size_t x = todo.back();
      todo.pop_back();
      if (seen[x] || taken[x]) continue;
      seen[x] = true;
      result.push_back(x);
      for (std::size_t d : units[x].deps) todo.push_back(d);
    }
    std::sort(result.begin(), result.end(), [&](std::size_t a, std::size_t b) {
      return units[a].order < units[b].order;
    });
    return result;
  };

  bool stopped = false;
  for (std::size_t u : order) {
    if (taken[u]) continue;
    if (stopped) {
      out.truncated_levels.insert(units[u].level);
      continue;
    }
    const auto group = closure(u);
    std::vector<RenderPiece> pieces;
    for (std::size_t x : group) pieces.insert(pieces.end(), units[x].pieces.begin(), units[x].pieces.end());
    if (set.cost_with(pieces) <= context_budget) {
      set.add(pieces);
      for (std::size_t x : group) {
        taken[x] = true;
        out.selected.insert(out.selected.end(), units[x].reported.begin(), units[x].reported.end());
      }
    } else {
      out.truncated_levels.insert(units[u].level);
      if (options.policy == SelectionPolicy::Prefix) stopped = true;
    }
  }

  RenderOptions& ro = out.render_options;
  for (const CodeElement& e : skeleton.elements()) {
    if (v.inside_focal_body(e)) ro.ignored.insert(e.id);
  }
  if (options.exclude_focal_docstring && focal.docstring_id) ro.ignored.insert(*focal.docstring_id);
  ro.elision_marker = options.elision_marker;
  ro.anchor = focal.signature_id;
  ro.before_anchor = options.control_code;
  out.pieces = set.active();
  std::sort(out.pieces.begin(), out.pieces.end(), [&](const RenderPiece& a, const RenderPiece& b) {
    return piece_span(skeleton, a).start < piece_span(skeleton, b).start;
  });
  out.text = render_text(skeleton, out.pieces, ro);
  out.rendered = tok.encode(out.text);
  out.tokens_used = out.rendered.size();
  if (out.tokens_used > context_budget + control_cost) {
    throw std::logic_error("packed context exceeds budget: " + std::to_string(out.tokens_used) + " > " +
                           std::to_string(context_budget + control_cost));
  }
  return out;
}

}  // namespace ewash
