#pragma once

#include <stdexcept>
#include <string>

namespace cdsbench {

enum class ErrorCode {
    // corpus
    MalformedTier,
    EmptyTranscript,
    TooShort,
    InsufficientData,
    CorpusNotFound,
    // lexicon
    FileUnreadable,
    NoValidEntries,
    // analyzers
    ProviderUnavailable,
    DimensionMismatch,
    InvalidTree,
    // backends
    UnknownRole,
    MissingExemplars,
    BackendExhausted,
    PlaybackMiss,
    DigestCollision,
    // analysis
    DegenerateDesign,
    EmptyGroup,
    // config / io
    ConfigInvalid,
    IoError,
};

const char* error_code_name(ErrorCode code);
int error_exit_code(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

}  // namespace cdsbench
