#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ewash {

/// One ingested Python file. `text` is checked to be valid UTF-8 on
/// construction.
class SourceFile {
 public:
  SourceFile(std::string path, std::string text);
  static SourceFile load(const std::string& path);

  const std::string& path() const noexcept { return path_; }
  const std::string& text() const noexcept { return text_; }
  std::size_t byte_len() const noexcept { return text_.size(); }

 private:
  std::string path_;
  std::string text_;
};

/// Offset of the first invalid UTF-8 sequence, if any.
std::optional<std::size_t> find_invalid_utf8(std::string_view text);

enum class ElementKind : std::uint8_t {
  Import,
  GlobalAssignment,
  GlobalExpression,
  ClassSignature,
  ClassDocstring,
  ClassAttribute,
  MethodSignature,
  MethodDocstring,
  MethodBody,
  Decorator,
};

std::string_view to_string(ElementKind kind);
std::optional<ElementKind> element_kind_from_string(std::string_view name);

using ElementId = std::uint32_t;

struct Span {
  std::uint32_t start = 0;
  std::uint32_t end = 0;
  std::uint32_t size() const { return end - start; }
  bool contains(const Span& o) const { return start <= o.start && o.end <= end; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct CodeElement {
  ElementId id = 0;
  ElementKind kind = ElementKind::GlobalExpression;
  std::string qualified_name;
  Span span;
  std::optional<ElementId> container;  // enclosing ClassSignature
  // Byte offset of the token that separates assignment targets from the
  // value (GlobalAssignment only): the last top-level `=`, the augmented
  // operator, or the annotation colon.
  std::optional<Span> split;

  friend bool operator==(const CodeElement&, const CodeElement&) = default;
};

struct MethodRecord {
  std::string qualified_name;
  ElementId signature_id = 0;
  std::optional<ElementId> docstring_id;
  ElementId body_id = 0;
  std::vector<ElementId> decorator_ids;
  std::optional<ElementId> container_class_id;
  bool is_class_method = false;

  friend bool operator==(const MethodRecord&, const MethodRecord&) = default;
};

class FileSkeleton {
 public:
  FileSkeleton(SourceFile source, std::vector<CodeElement> elements,
               std::vector<MethodRecord> methods, double parse_millis);

  const SourceFile& source() const noexcept { return source_; }
  const std::vector<CodeElement>& elements() const noexcept { return elements_; }
  const std::vector<MethodRecord>& methods() const noexcept { return methods_; }
  double parse_millis() const noexcept { return parse_millis_; }

  const CodeElement& element(ElementId id) const { return elements_.at(id); }
  std::string_view text_of(ElementId id) const;
  std::string_view text_of(const Span& span) const;

  /// First method with this qualified name.
  const MethodRecord* find_method(std::string_view qualified_name) const;

  /// Element text preceded by the indentation of the line it starts on.
  std::string indented_text(ElementId id) const;
  /// Leading whitespace of the line containing byte `offset`.
  std::string_view line_indent(std::uint32_t offset) const;

  /// Elements not contained in another element's span (what reconstruction
  /// is defined over).
  std::vector<ElementId> top_level_ids() const;

 private:
  SourceFile source_;
  std::vector<CodeElement> elements_;
  std::vector<MethodRecord> methods_;
  double parse_millis_;
};

/// Parses `source` and extracts its syntax-hierarchy elements. Throws
/// ParseTimeout, SyntaxError or EncodingError.
FileSkeleton parse_file(const SourceFile& source,
                        std::chrono::milliseconds timeout = std::chrono::seconds(10));

/// Value of the docstring at the head of a function or class body, with the
/// quotes (and any prefix) stripped, or nullopt when the first statement is
/// not a bare string literal.
std::optional<std::string> extract_docstring(std::string_view body_text);

/// `def name(params) -> ret:` header exactly as written, without decorators.
std::string signature_of(const MethodRecord& method, const FileSkeleton& skeleton);

nlohmann::json skeleton_to_json(const FileSkeleton& skeleton);

}  // namespace ewash
