#pragma once

#include <stdexcept>
#include <string>

namespace ego {

enum class ErrorCode {
    Syntax,
    UnknownNode,
    Cycle,
    Index,
    MixedTarget,
    RejectedEdit,
    Backend,
    ScriptMiss,
    Envelope,
    Config,
    MissingField,
    LengthMismatch,
    InsufficientData,
    Precondition,
    Io,
    InvalidArgument,
};

/// Single exception type for all domain errors; the code survives the
/// C boundary as an ego_status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::Syntax: return "SyntaxError";
        case ErrorCode::UnknownNode: return "UnknownNode";
        case ErrorCode::Cycle: return "CycleError";
        case ErrorCode::Index: return "IndexError";
        case ErrorCode::MixedTarget: return "MixedTarget";
        case ErrorCode::RejectedEdit: return "RejectedEdit";
        case ErrorCode::Backend: return "BackendError";
        case ErrorCode::ScriptMiss: return "ScriptMiss";
        case ErrorCode::Envelope: return "EnvelopeError";
        case ErrorCode::Config: return "ConfigError";
        case ErrorCode::MissingField: return "MissingField";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::Precondition: return "PreconditionError";
        case ErrorCode::Io: return "IoError";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "UnknownError";
}

}  // namespace ego
