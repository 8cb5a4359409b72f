#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace smagent {

enum class Errc {
  // parsing
  SyntaxError,
  SchemaError,
  GuardSyntaxError,
  // machine model
  UnknownState,
  InvalidMachine,
  // belief
  StepOutOfOrder,
  // provider
  ScriptExhausted,
  ScriptMismatch,
  HttpError,
  Timeout,
  ProviderError,
  // policy
  NoCandidates,
  Unparseable,
  UnknownEvent,
  MissingArgument,
  BadArgumentType,
  PolicyFailure,
  PolicyExhausted,
  RuleArgumentUnresolvable,
  // engine
  GuardTypeError,
  UnknownGuardAction,
  UnhandledEvent,
  MissingExternalArgument,
  MissingInternalValue,
  ActionFailure,
  UnknownAction,
  // scene graph
  InverseConflict,
  UnknownAttribute,
  UnknownObject,
  UnknownRelation,
  UnclassifiableReply,
  UnparseableReply,
  // registry / harness
  DuplicateAction,
  MinSize,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::SchemaError: return "SchemaError";
    case Errc::GuardSyntaxError: return "GuardSyntaxError";
    case Errc::UnknownState: return "UnknownState";
    case Errc::InvalidMachine: return "InvalidMachine";
    case Errc::StepOutOfOrder: return "StepOutOfOrder";
    case Errc::ScriptExhausted: return "ScriptExhausted";
    case Errc::ScriptMismatch: return "ScriptMismatch";
    case Errc::HttpError: return "HttpError";
    case Errc::Timeout: return "Timeout";
    case Errc::ProviderError: return "ProviderError";
    case Errc::NoCandidates: return "NoCandidates";
    case Errc::Unparseable: return "Unparseable";
    case Errc::UnknownEvent: return "UnknownEvent";
    case Errc::MissingArgument: return "MissingArgument";
    case Errc::BadArgumentType: return "BadArgumentType";
    case Errc::PolicyFailure: return "PolicyFailure";
    case Errc::PolicyExhausted: return "PolicyExhausted";
    case Errc::RuleArgumentUnresolvable: return "RuleArgumentUnresolvable";
    case Errc::GuardTypeError: return "GuardTypeError";
    case Errc::UnknownGuardAction: return "UnknownGuardAction";
    case Errc::UnhandledEvent: return "UnhandledEvent";
    case Errc::MissingExternalArgument: return "MissingExternalArgument";
    case Errc::MissingInternalValue: return "MissingInternalValue";
    case Errc::ActionFailure: return "ActionFailure";
    case Errc::UnknownAction: return "UnknownAction";
    case Errc::InverseConflict: return "InverseConflict";
    case Errc::UnknownAttribute: return "UnknownAttribute";
    case Errc::UnknownObject: return "UnknownObject";
    case Errc::UnknownRelation: return "UnknownRelation";
    case Errc::UnclassifiableReply: return "UnclassifiableReply";
    case Errc::UnparseableReply: return "UnparseableReply";
    case Errc::DuplicateAction: return "DuplicateAction";
    case Errc::MinSize: return "MinSize";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// Base exception for every failure raised by the library. The code is the
/// stable, testable part; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Malformed JSON text. Line and column are 1-based.
class JsonSyntaxError : public Error {
 public:
  JsonSyntaxError(std::size_t line, std::size_t column, const std::string& detail)
      : Error(Errc::SyntaxError, "line " + std::to_string(line) + ", column " +
                                     std::to_string(column) + ": " + detail),
        line_(line),
        column_(column) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }
  [[nodiscard]] std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Structurally valid JSON that does not fit the expected schema.
class SchemaError : public Error {
 public:
  SchemaError(std::string pointer, const std::string& reason)
      : Error(Errc::SchemaError, (pointer.empty() ? std::string("/") : pointer) + ": " + reason),
        pointer_(std::move(pointer)) {}

  [[nodiscard]] const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

class GuardSyntaxError : public Error {
 public:
  GuardSyntaxError(std::size_t position, std::vector<std::string> expected, const std::string& detail)
      : Error(Errc::GuardSyntaxError, "offset " + std::to_string(position) + ": " + detail),
        position_(position),
        expected_(std::move(expected)) {}

  [[nodiscard]] std::size_t position() const noexcept { return position_; }
  [[nodiscard]] const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t position_;
  std::vector<std::string> expected_;
};

class HttpError : public Error {
 public:
  HttpError(int status, const std::string& body_excerpt)
      : Error(Errc::HttpError, "status " + std::to_string(status) + ": " + body_excerpt),
        status_(status) {}

  [[nodiscard]] int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace smagent
