#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mcre {

enum class ErrorCode {
    ZeroVector,
    DimensionMismatch,
    NonFinite,
    InvalidWeights,
    InvalidArgument,
    EmptyGallery,
    UnknownCandidate,
    UnknownReference,
    UnknownTemplate,
    InvalidTemplate,
    ProviderUnavailable,
    ParseFailure,
    ImageUnresolvable,
    MalformedAnnotation,
    MissingField,
    BadMagic,
    UnsupportedVersion,
    TruncatedFile,
    DuplicateId,
    CorruptStore,
    QueryMismatch,
    MissingSubset,
    DanglingId,
    MissingCaptionEmbedding,
    UnsupportedFormat,
    CacheCorrupt,
    Io,
    Config,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Base exception for every failure raised by the library. The code is the
/// stable category; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    /// Message without the category prefix.
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

enum class ParseFailureKind { NoObjectFound, MissingKey, EmptyCaption };

std::string_view to_string(ParseFailureKind kind) noexcept;

class ParseFailure : public Error {
public:
    ParseFailure(ParseFailureKind kind, const std::string& detail);

    [[nodiscard]] ParseFailureKind kind() const noexcept { return kind_; }

private:
    ParseFailureKind kind_;
};

/// Raised when annotation or query identifiers do not resolve against the
/// embedding stores. Carries every offending id, not just the first.
class DanglingIdError : public Error {
public:
    DanglingIdError(ErrorCode code, std::vector<std::string> ids);

    [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return ids_; }

private:
    std::vector<std::string> ids_;
};

}  // namespace mcre
