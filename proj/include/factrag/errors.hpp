#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace factrag {

enum class ErrorCode {
    // corpus store
    DuplicateDocId,
    EmptyDocument,
    UnknownDocument,
    InvalidChunkConfig,
    UnknownIdentifier,
    WebIdentifierNotPersisted,
    StoreLocked,
    // retrieval
    ProviderUnavailable,
    DimensionMismatch,
    EmptyIndex,
    FingerprintMismatch,
    NoAnchorEntities,
    AllResultsFiltered,
    ContextEmpty,
    // gateway
    BackendTimeout,
    BackendRefused,
    EmptyCompletion,
    // prompt engine
    MissingStageTemplate,
    UnknownPlaceholder,
    MissingBinding,
    // pipeline
    ParseFailure,
    CitationOutOfContext,
    PreconditionViolation,
    // evaluation
    DatasetParseError,
    EmptyClaimSet,
    // plumbing
    ConfigError,
    IoError,
};

constexpr std::string_view code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::DuplicateDocId: return "DuplicateDocId";
        case ErrorCode::EmptyDocument: return "EmptyDocument";
        case ErrorCode::UnknownDocument: return "UnknownDocument";
        case ErrorCode::InvalidChunkConfig: return "InvalidChunkConfig";
        case ErrorCode::UnknownIdentifier: return "UnknownIdentifier";
        case ErrorCode::WebIdentifierNotPersisted: return "WebIdentifierNotPersisted";
        case ErrorCode::StoreLocked: return "StoreLocked";
        case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyIndex: return "EmptyIndex";
        case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
        case ErrorCode::NoAnchorEntities: return "NoAnchorEntities";
        case ErrorCode::AllResultsFiltered: return "AllResultsFiltered";
        case ErrorCode::ContextEmpty: return "ContextEmpty";
        case ErrorCode::BackendTimeout: return "BackendTimeout";
        case ErrorCode::BackendRefused: return "BackendRefused";
        case ErrorCode::EmptyCompletion: return "EmptyCompletion";
        case ErrorCode::MissingStageTemplate: return "MissingStageTemplate";
        case ErrorCode::UnknownPlaceholder: return "UnknownPlaceholder";
        case ErrorCode::MissingBinding: return "MissingBinding";
        case ErrorCode::ParseFailure: return "ParseFailure";
        case ErrorCode::CitationOutOfContext: return "CitationOutOfContext";
        case ErrorCode::PreconditionViolation: return "PreconditionViolation";
        case ErrorCode::DatasetParseError: return "DatasetParseError";
        case ErrorCode::EmptyClaimSet: return "EmptyClaimSet";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

inline ErrorCode code_from_name(std::string_view name) {
    for (int i = 0; i <= static_cast<int>(ErrorCode::IoError); ++i) {
        const auto code = static_cast<ErrorCode>(i);
        if (code_name(code) == name) return code;
    }
    return ErrorCode::IoError;
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, bool transient = false)
        : std::runtime_error(std::string(code_name(code)) + ": " + message),
          code_(code),
          transient_(transient || code == ErrorCode::BackendTimeout ||
                     code == ErrorCode::ProviderUnavailable) {}

    ErrorCode code() const noexcept { return code_; }

    /// Transient failures (timeouts, connect errors, 5xx) are worth retrying.
    bool transient() const noexcept { return transient_; }

private:
    ErrorCode code_;
    bool transient_;
};

/// Errors raised by a completion backend; the pipeline reports these as
/// gateway failures and the service maps them to 503.
inline bool is_gateway_error(ErrorCode code) {
    return code == ErrorCode::BackendTimeout || code == ErrorCode::BackendRefused ||
           code == ErrorCode::EmptyCompletion || code == ErrorCode::ProviderUnavailable;
}

} // namespace factrag
