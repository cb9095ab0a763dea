#include "ec/error.hpp"

namespace ec {

const char* to_string(Errc code) noexcept {
    switch (code) {
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::NonContiguousLabels: return "NonContiguousLabels";
        case Errc::LabelOutOfRange: return "LabelOutOfRange";
        case Errc::SegmentIdOutOfRange: return "SegmentIdOutOfRange";
        case Errc::EmptyFrontier: return "EmptyFrontier";
        case Errc::TargetEqualsPredicted: return "TargetEqualsPredicted";
        case Errc::BackendUnavailable: return "BackendUnavailable";
        case Errc::MalformedResponse: return "MalformedResponse";
        case Errc::Timeout: return "Timeout";
        case Errc::RemoteError: return "RemoteError";
        case Errc::Io: return "Io";
        case Errc::Format: return "Format";
    }
    return "Unknown";
}

Error::Error(Errc code, const std::string& message, std::optional<std::int64_t> detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(detail) {}

bool Error::is_classifier_error() const noexcept {
    switch (code_) {
        case Errc::BackendUnavailable:
        case Errc::MalformedResponse:
        case Errc::Timeout:
        case Errc::RemoteError:
            return true;
        default:
            return false;
    }
}

}  // namespace ec
