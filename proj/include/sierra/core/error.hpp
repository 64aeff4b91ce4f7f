#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sierra {

enum class ErrorCode {
  // core-model
  NonFiniteValue,
  TimestampOutOfRange,
  BadChannelName,
  BadIdentifier,
  // quest-board
  ParseError,
  OutOfRange,
  MissingRequired,
  UnknownItem,
  TypeMismatch,
  ResponseError,
  NoScorableItems,
  UnknownQuestionnaire,
  DuplicateQuestionnaire,
  // ingest-store
  UnknownSubject,
  UnknownChannel,
  StoreClosed,
  BatchTooLarge,
  EmptyBatch,
  DuplicateSubject,
  MissingMasterKey,
  AuthFailure,
  WrongAad,
  CorruptRecord,
  // viz-palette
  DuplicatePluginId,
  UnknownPlugin,
  BadParams,
  // ml-toolkit
  BadArchitecture,
  ShapeMismatch,
  NonFiniteInput,
  LabelOutOfRange,
  EmptyMatrix,
  PreconditionViolation,
  BadDataset,
  UnknownDataset,
  UnknownJob,
  JobNotFinished,
  // auth-guard
  DuplicateUser,
  WeakPassword,
  BadUsername,
  AuthFailed,
  Forbidden,
  // api-service
  ConfigError,
  PortInUse,
  BadRequest,
  NotFound,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// One entry of an itemized failure (a rejected response item, a bad plugin
/// parameter).
struct ErrorDetail {
  std::string subject;
  ErrorCode reason;
  std::string message;

  bool operator==(const ErrorDetail&) const = default;
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::vector<ErrorDetail> details = {});

  ErrorCode code() const noexcept { return code_; }
  const std::vector<ErrorDetail>& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::vector<ErrorDetail> details_;
};

/// DSL failure pinned to a 1-based source line.
class ParseError : public Error {
 public:
  ParseError(int line, std::string message);

  int line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  int line_;
  std::string reason_;
};

}  // namespace sierra
