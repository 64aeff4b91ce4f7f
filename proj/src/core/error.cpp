#include "sierra/core/error.hpp"

namespace sierra {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::TimestampOutOfRange: return "TimestampOutOfRange";
    case ErrorCode::BadChannelName: return "BadChannelName";
    case ErrorCode::BadIdentifier: return "BadIdentifier";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::MissingRequired: return "MissingRequired";
    case ErrorCode::UnknownItem: return "UnknownItem";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::ResponseError: return "ResponseError";
    case ErrorCode::NoScorableItems: return "NoScorableItems";
    case ErrorCode::UnknownQuestionnaire: return "UnknownQuestionnaire";
    case ErrorCode::DuplicateQuestionnaire: return "DuplicateQuestionnaire";
    case ErrorCode::UnknownSubject: return "UnknownSubject";
    case ErrorCode::UnknownChannel: return "UnknownChannel";
    case ErrorCode::StoreClosed: return "StoreClosed";
    case ErrorCode::BatchTooLarge: return "BatchTooLarge";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::DuplicateSubject: return "DuplicateSubject";
    case ErrorCode::MissingMasterKey: return "MissingMasterKey";
    case ErrorCode::AuthFailure: return "AuthFailure";
    case ErrorCode::WrongAad: return "WrongAad";
    case ErrorCode::CorruptRecord: return "CorruptRecord";
    case ErrorCode::DuplicatePluginId: return "DuplicatePluginId";
    case ErrorCode::UnknownPlugin: return "UnknownPlugin";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::BadArchitecture: return "BadArchitecture";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::BadDataset: return "BadDataset";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::UnknownJob: return "UnknownJob";
    case ErrorCode::JobNotFinished: return "JobNotFinished";
    case ErrorCode::DuplicateUser: return "DuplicateUser";
    case ErrorCode::WeakPassword: return "WeakPassword";
    case ErrorCode::BadUsername: return "BadUsername";
    case ErrorCode::AuthFailed: return "AuthFailed";
    case ErrorCode::Forbidden: return "Forbidden";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::PortInUse: return "PortInUse";
    case ErrorCode::BadRequest: return "BadRequest";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string message, std::vector<ErrorDetail> details)
    : std::runtime_error(std::move(message)), code_(code), details_(std::move(details)) {}

ParseError::ParseError(int line, std::string message)
    : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + message),
      line_(line),
      reason_(std::move(message)) {}

}  // namespace sierra
