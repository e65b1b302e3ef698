#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ewash {

/// Base of every error the library raises. Callers that only need to know
/// "skip this input" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EncodingError : public Error {
 public:
  explicit EncodingError(std::size_t offset)
      : Error("invalid UTF-8 at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& msg, int line, int column)
      : Error("line " + std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

class ParseTimeout : public Error {
 public:
  ParseTimeout() : Error("parse time limit exceeded") {}
};

class FocalNotFound : public Error {
 public:
  explicit FocalNotFound(const std::string& name) : Error("focal method not found: " + name) {}
};

class BudgetTooSmall : public Error {
 public:
  BudgetTooSmall(std::size_t needed, std::size_t budget)
      : Error("level-0 context needs " + std::to_string(needed) + " tokens, budget is " +
              std::to_string(budget)),
        needed_(needed),
        budget_(budget) {}
  std::size_t needed() const noexcept { return needed_; }
  std::size_t budget() const noexcept { return budget_; }

 private:
  std::size_t needed_;
  std::size_t budget_;
};

// Metric preconditions.
class EmptyRecordSet : public Error {
 public:
  EmptyRecordSet() : Error("no eligible prediction records") {}
};
class EmptySequence : public Error {
 public:
  EmptySequence() : Error("empty token sequence") {}
};
class EmptyCorpus : public Error {
 public:
  EmptyCorpus() : Error("empty corpus") {}
};
class NoTokens : public Error {
 public:
  NoTokens() : Error("no tokens to score") {}
};
class EmptyList : public Error {
 public:
  EmptyList() : Error("empty list") {}
};
class BadEdges : public Error {
 public:
  explicit BadEdges(const std::string& why) : Error("bad bin edges: " + why) {}
};

class NoFilesFound : public Error {
 public:
  NoFilesFound() : Error("no *.py files found under the given roots") {}
};

class AdapterFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace ewash
