#include "ewash/syntax_model.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ewash/errors.hpp"
#include "ewash/lexer.hpp"
#include "ewash/parser.hpp"

namespace ewash {

std::optional<std::size_t> find_invalid_utf8(std::string_view s) {
  const auto* b = reinterpret_cast<const unsigned char*>(s.data());
  const std::size_t n = s.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = b[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((b[i + k] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (b[i + k] & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                          (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::nullopt;
}

SourceFile::SourceFile(std::string path, std::string text)
    : path_(std::move(path)), text_(std::move(text)) {
  if (auto bad = find_invalid_utf8(text_)) throw EncodingError(*bad);
}

SourceFile SourceFile::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return SourceFile(path, ss.str());
}

namespace {
constexpr std::string_view kKindNames[] = {
    "Import",          "GlobalAssignment", "GlobalExpression", "ClassSignature",
    "ClassDocstring",  "ClassAttribute",   "MethodSignature",  "MethodDocstring",
    "MethodBody",      "Decorator"};
}

std::string_view to_string(ElementKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<ElementKind> element_kind_from_string(std::string_view name) {
  for (int i = 0; i < 10; ++i) {
    if (kKindNames[i] == name) return static_cast<ElementKind>(i);
  }
  return std::nullopt;
}

FileSkeleton::FileSkeleton(SourceFile source, std::vector<CodeElement> elements,
                           std::vector<MethodRecord> methods, double parse_millis)
    : source_(std::move(source)),
      elements_(std::move(elements)),
      methods_(std::move(methods)),
      parse_millis_(parse_millis) {}

std::string_view FileSkeleton::text_of(ElementId id) const { return text_of(element(id).span); }

std::string_view FileSkeleton::text_of(const Span& span) const {
  return std::string_view(source_.text()).substr(span.start, span.size());
}

const MethodRecord* FileSkeleton::find_method(std::string_view qualified_name) const {
  for (const auto& m : methods_) {
    if (m.qualified_name == qualified_name) return &m;
  }
  return nullptr;
}

std::string_view FileSkeleton::line_indent(std::uint32_t offset) const {
  const std::string& t = source_.text();
  std::size_t line_start = offset;
  while (line_start > 0 && t[line_start - 1] != '\n' && t[line_start - 1] != '\r') --line_start;
  std::size_t e = line_start;
  while (e < offset && (t[e] == ' ' || t[e] == '\t' || t[e] == '\f')) ++e;
  return std::string_view(t).substr(line_start, e - line_start);
}

std::string FileSkeleton::indented_text(ElementId id) const {
  const auto& e = element(id);
  std::string out(line_indent(e.span.start));
  out += text_of(e.span);
  return out;
}

std::vector<ElementId> FileSkeleton::top_level_ids() const {
  std::vector<ElementId> out;
  std::uint32_t max_end = 0;
  bool any = false;
  for (const auto& e : elements_) {
    if (any && e.span.end <= max_end) continue;
    out.push_back(e.id);
    max_end = e.span.end;
    any = true;
  }
  return out;
}

namespace {

class Extractor {
 public:
  Extractor(const Module& m, std::string_view src) : m_(m), src_(src) {}

  void run() {
    for (const Stmt& s : m_.body) top_level(s);
  }

  std::vector<CodeElement> elements;
  std::vector<MethodRecord> methods;  // ids are insertion indices until finalize()

 private:
  Span span_of(TokRange r) const { return {m_.tokens[r.first].start, m_.tokens[r.last].end}; }
  std::string_view tok_text(std::uint32_t i) const { return m_.tokens[i].text(src_); }
  std::string_view range_text(TokRange r) const {
    const Span s = span_of(r);
    return src_.substr(s.start, s.size());
  }

  ElementId add(ElementKind kind, std::string name, Span span,
                std::optional<ElementId> container = std::nullopt,
                std::optional<Span> split = std::nullopt) {
    CodeElement e;
    e.id = static_cast<ElementId>(elements.size());
    e.kind = kind;
    e.qualified_name = std::move(name);
    e.span = span;
    e.container = container;
    e.split = split;
    elements.push_back(std::move(e));
    return elements.back().id;
  }

  static bool is_docstring(const Stmt& s) {
    return s.kind == StmtKind::Expr && s.value && s.value->kind == ExprKind::Str;
  }
  static bool is_assignment(const Stmt& s) {
    return s.kind == StmtKind::Assign || s.kind == StmtKind::AnnAssign ||
           s.kind == StmtKind::AugAssign;
  }

  std::string target_name(const Stmt& s) const {
    if (s.targets.empty()) return {};
    return std::string(range_text(s.targets.front().range));
  }

  std::string import_name(const Stmt& s) const {
    std::uint32_t i = s.range.first;
    if (s.kind == StmtKind::ImportFrom) {
      while (i <= s.range.last && tok_text(i) != "import") ++i;
      ++i;
      if (i <= s.range.last && tok_text(i) == "(") ++i;
      if (i > s.range.last) return {};
      if (i + 2 <= s.range.last && tok_text(i + 1) == "as") return std::string(tok_text(i + 2));
      return std::string(tok_text(i));
    }
    ++i;  // 'import'
    const std::uint32_t head = i;
    while (i + 1 <= s.range.last && tok_text(i + 1) == ".") i += 2;
    if (i + 2 <= s.range.last && tok_text(i + 1) == "as") return std::string(tok_text(i + 2));
    return std::string(tok_text(head));
  }

  void top_level(const Stmt& s) {
    switch (s.kind) {
      case StmtKind::Import:
      case StmtKind::ImportFrom:
        add(ElementKind::Import, import_name(s), span_of(s.range));
        break;
      case StmtKind::Assign:
      case StmtKind::AnnAssign:
      case StmtKind::AugAssign:
        add(ElementKind::GlobalAssignment, target_name(s), span_of(s.range), std::nullopt,
            span_of({*s.split_tok, *s.split_tok}));
        break;
      case StmtKind::FunctionDef:
        function(s, std::nullopt, {});
        break;
      case StmtKind::ClassDef:
        klass(s);
        break;
      default:
        add(ElementKind::GlobalExpression, {}, span_of(s.range));
    }
  }

  void klass(const Stmt& s) {
    const std::string name(tok_text(s.name_tok));
    for (const TokRange& d : s.decorators) add(ElementKind::Decorator, name, span_of(d));
    const ElementId cls = add(ElementKind::ClassSignature, name, span_of(s.header));
    std::size_t i = 0;
    if (!s.body.empty() && is_docstring(s.body.front())) {
      add(ElementKind::ClassDocstring, name, span_of(s.body.front().range), cls);
      i = 1;
    }
    for (; i < s.body.size(); ++i) {
      const Stmt& m = s.body[i];
      if (m.kind == StmtKind::FunctionDef) {
        function(m, cls, name);
      } else if (is_assignment(m)) {
        add(ElementKind::ClassAttribute, name + "." + target_name(m), span_of(m.range), cls);
      } else if (m.kind == StmtKind::ClassDef) {
        add(ElementKind::ClassAttribute, name + "." + std::string(tok_text(m.name_tok)),
            span_of(m.range), cls);
      } else {
        add(ElementKind::ClassAttribute, {}, span_of(m.range), cls);
      }
    }
  }

  void function(const Stmt& s, std::optional<ElementId> cls, const std::string& cls_name) {
    const std::string fname(tok_text(s.name_tok));
    const std::string qual = cls ? cls_name + "." + fname : fname;
    MethodRecord rec;
    rec.qualified_name = qual;
    for (const TokRange& d : s.decorators) {
      rec.decorator_ids.push_back(add(ElementKind::Decorator, qual, span_of(d), cls));
    }
    rec.signature_id = add(ElementKind::MethodSignature, qual, span_of(s.header), cls);
    std::size_t first_body = 0;
    if (s.body.size() >= 2 && is_docstring(s.body.front())) {
      rec.docstring_id = add(ElementKind::MethodDocstring, qual, span_of(s.body.front().range), cls);
      first_body = 1;
    }
    const TokRange body_range{s.body[first_body].range.first, s.body.back().range.last};
    rec.body_id = add(ElementKind::MethodBody, qual, span_of(body_range), cls);
    rec.container_class_id = cls;
    rec.is_class_method = cls.has_value();
    methods.push_back(std::move(rec));

    if (cls && fname == "__init__" && s.first_param_tok) {
      const std::string_view self_name = tok_text(*s.first_param_tok);
      for (std::size_t i = first_body; i < s.body.size(); ++i) {
        self_attributes(s.body[i], self_name, *cls, cls_name);
      }
    }
  }

  std::optional<std::string> self_target(const Expr& e, std::string_view self_name) const {
    if (e.kind == ExprKind::Attribute && e.range.last == e.range.first + 2 &&
        e.elts.front().kind == ExprKind::Name && !e.elts.front().parenthesized &&
        tok_text(e.range.first) == self_name) {
      return std::string(tok_text(e.range.last));
    }
    if (e.kind == ExprKind::Tuple || e.kind == ExprKind::List) {
      for (const Expr& x : e.elts) {
        if (auto n = self_target(x, self_name)) return n;
      }
    }
    if (e.kind == ExprKind::Starred) return self_target(e.elts.front(), self_name);
    return std::nullopt;
  }

  void self_attributes(const Stmt& s, std::string_view self_name, ElementId cls,
                       const std::string& cls_name) {
    if (s.kind == StmtKind::FunctionDef || s.kind == StmtKind::ClassDef) return;
    if (is_assignment(s)) {
      for (const Expr& t : s.targets) {
        if (auto attr = self_target(t, self_name)) {
          add(ElementKind::ClassAttribute, cls_name + "." + *attr, span_of(s.range), cls);
          return;
        }
      }
      return;
    }
    for (const Stmt& inner : s.body) self_attributes(inner, self_name, cls, cls_name);
  }

  const Module& m_;
  std::string_view src_;
};

}  // namespace

FileSkeleton parse_file(const SourceFile& source, std::chrono::milliseconds timeout) {
  const auto started = Clock::now();
  const Module module = parse_module(source.text(), started + timeout);
  Extractor ex(module, source.text());
  ex.run();

  // Source order: by start, enclosing before enclosed, then insertion order.
  std::vector<ElementId> order(ex.elements.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](ElementId a, ElementId b) {
    const Span& sa = ex.elements[a].span;
    const Span& sb = ex.elements[b].span;
    if (sa.start != sb.start) return sa.start < sb.start;
    return sa.end > sb.end;
  });
  std::vector<ElementId> remap(order.size());
  std::vector<CodeElement> elements;
  elements.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    remap[order[i]] = static_cast<ElementId>(i);
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    CodeElement e = std::move(ex.elements[order[i]]);
    e.id = static_cast<ElementId>(i);
    if (e.container) e.container = remap[*e.container];
    elements.push_back(std::move(e));
  }
  for (auto& m : ex.methods) {
    m.signature_id = remap[m.signature_id];
    m.body_id = remap[m.body_id];
    if (m.docstring_id) m.docstring_id = remap[*m.docstring_id];
    if (m.container_class_id) m.container_class_id = remap[*m.container_class_id];
    for (auto& d : m.decorator_ids) d = remap[d];
  }
  const double millis =
      std::chrono::duration<double, std::milli>(Clock::now() - started).count();
  return FileSkeleton(source, std::move(elements), std::move(ex.methods), millis);
}

std::optional<std::string> extract_docstring(std::string_view body_text) {
  const auto lexemes = lex_lenient(body_text);
  std::size_t i = 0;
  while (i < lexemes.size() && (lexemes[i].kind == LexemeKind::Indent ||
                                lexemes[i].kind == LexemeKind::Newline ||
                                lexemes[i].kind == LexemeKind::Comment)) {
    ++i;
  }
  std::string value;
  bool any = false;
  for (; i < lexemes.size() && lexemes[i].kind == LexemeKind::String; ++i) {
    const auto lit = body_text.substr(lexemes[i].start, lexemes[i].end - lexemes[i].start);
    const auto parts = split_string_literal(lit);
    if (!parts) return std::nullopt;
    for (char c : parts->prefix) {
      const char l = static_cast<char>(c | 0x20);
      if (l == 'f' || l == 'b') return std::nullopt;
    }
    value += parts->content;
    any = true;
  }
  if (!any) return std::nullopt;
  if (i < lexemes.size()) {
    const Lexeme& next = lexemes[i];
    const bool ends = next.kind == LexemeKind::Newline || next.kind == LexemeKind::Comment ||
                      (next.kind == LexemeKind::Op &&
                       body_text.substr(next.start, next.end - next.start) == ";");
    if (!ends) return std::nullopt;
  }
  return value;
}

std::string signature_of(const MethodRecord& method, const FileSkeleton& skeleton) {
  return std::string(skeleton.text_of(method.signature_id));
}

nlohmann::json skeleton_to_json(const FileSkeleton& sk) {
  using nlohmann::json;
  json elements = json::array();
  for (const auto& e : sk.elements()) {
    json j = {{"id", e.id},
              {"kind", to_string(e.kind)},
              {"qualified_name", e.qualified_name},
              {"start", e.span.start},
              {"end", e.span.end},
              {"container", e.container ? json(*e.container) : json(nullptr)}};
    if (e.split) j["split"] = {e.split->start, e.split->end};
    elements.push_back(std::move(j));
  }
  json methods = json::array();
  for (const auto& m : sk.methods()) {
    methods.push_back({{"qualified_name", m.qualified_name},
                       {"signature_id", m.signature_id},
                       {"docstring_id", m.docstring_id ? json(*m.docstring_id) : json(nullptr)},
                       {"body_id", m.body_id},
                       {"decorator_ids", m.decorator_ids},
                       {"container_class_id",
                        m.container_class_id ? json(*m.container_class_id) : json(nullptr)},
                       {"is_class_method", m.is_class_method}});
  }
  return {{"path", sk.source().path()},
          {"parse_millis", sk.parse_millis()},
          {"elements", std::move(elements)},
          {"methods", std::move(methods)}};
}

}  // namespace ewash
