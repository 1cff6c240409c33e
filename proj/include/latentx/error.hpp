#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace latentx {

enum class ErrorKind {
  Syntax,
  UnknownSymbolKind,
  UnclassifiableFormula,
  EmptyFormulaSet,
  NoRuleMatch,
  MissingProperty,
  MissingGroupAssignment,
  NoConfoundAvailable,
  InvalidGrid,
  InvalidPlan,
  DimensionMismatch,
  RemoteDecode,
  UnsupportedOperation,
  RaggedRow,
  Transient,
  Gateway,
  Auth,
  CassetteMiss,
  Precondition,
  ZeroNormEmbedding,
  EmptyCalibrationSet,
  EmptyHypothesis,
  Config,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Base exception for every failure raised by the library. The kind is
/// what callers branch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Parse failure with the byte offset into the formula text, and the
/// 1-based line number when the formula came from a file.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, const std::string& message,
              std::optional<std::size_t> line = std::nullopt)
      : Error(ErrorKind::Syntax, format(offset, message, line)),
        offset_(offset),
        line_(line),
        detail_(message) {}

  std::size_t offset() const noexcept { return offset_; }
  std::optional<std::size_t> line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string format(std::size_t offset, const std::string& message,
                            std::optional<std::size_t> line) {
    std::string out;
    if (line) out += "line " + std::to_string(*line) + ": ";
    out += "syntax error at byte " + std::to_string(offset) + ": " + message;
    return out;
  }

  std::size_t offset_;
  std::optional<std::size_t> line_;
  std::string detail_;
};

}  // namespace latentx
