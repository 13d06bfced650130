#include "mcre/error.hpp"

namespace mcre {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::InvalidWeights: return "InvalidWeights";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::EmptyGallery: return "EmptyGallery";
        case ErrorCode::UnknownCandidate: return "UnknownCandidate";
        case ErrorCode::UnknownReference: return "UnknownReference";
        case ErrorCode::UnknownTemplate: return "UnknownTemplate";
        case ErrorCode::InvalidTemplate: return "InvalidTemplate";
        case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
        case ErrorCode::ParseFailure: return "ParseFailure";
        case ErrorCode::ImageUnresolvable: return "ImageUnresolvable";
        case ErrorCode::MalformedAnnotation: return "MalformedAnnotation";
        case ErrorCode::MissingField: return "MissingField";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::CorruptStore: return "CorruptStore";
        case ErrorCode::QueryMismatch: return "QueryMismatch";
        case ErrorCode::MissingSubset: return "MissingSubset";
        case ErrorCode::DanglingId: return "DanglingId";
        case ErrorCode::MissingCaptionEmbedding: return "MissingCaptionEmbedding";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::CacheCorrupt: return "CacheCorrupt";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Config: return "Config";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

std::string_view to_string(ParseFailureKind kind) noexcept {
    switch (kind) {
        case ParseFailureKind::NoObjectFound: return "no-object-found";
        case ParseFailureKind::MissingKey: return "missing-key";
        case ParseFailureKind::EmptyCaption: return "empty-caption";
    }
    return "unknown";
}

ParseFailure::ParseFailure(ParseFailureKind kind, const std::string& detail)
    : Error(ErrorCode::ParseFailure, std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    constexpr std::size_t kShown = 20;
    for (std::size_t i = 0; i < ids.size() && i < kShown; ++i) {
        if (i) out += ", ";
        out += ids[i];
    }
    if (ids.size() > kShown) out += ", ... (" + std::to_string(ids.size()) + " total)";
    return out;
}

}  // namespace

DanglingIdError::DanglingIdError(ErrorCode code, std::vector<std::string> ids)
    : Error(code, "unresolved identifiers: " + join_ids(ids)), ids_(std::move(ids)) {}

}  // namespace mcre
