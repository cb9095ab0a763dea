#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace ec {

enum class Errc {
    InvalidArgument,
    DimensionMismatch,
    NonContiguousLabels,
    LabelOutOfRange,
    SegmentIdOutOfRange,
    EmptyFrontier,
    TargetEqualsPredicted,
    BackendUnavailable,
    MalformedResponse,
    Timeout,
    RemoteError,
    Io,
    Format,
};

const char* to_string(Errc code) noexcept;

/// Exception type for every failure raised by the engine. `detail` carries an
/// optional integer payload, e.g. the missing id of NonContiguousLabels.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message, std::optional<std::int64_t> detail = std::nullopt);

    Errc code() const noexcept { return code_; }
    std::optional<std::int64_t> detail() const noexcept { return detail_; }

    /// True for failures that originate in the scoring backend.
    bool is_classifier_error() const noexcept;

private:
    Errc code_;
    std::optional<std::int64_t> detail_;
};

}  // namespace ec
