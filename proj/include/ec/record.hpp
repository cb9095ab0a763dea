#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ec/search.hpp"
#include "ec/types.hpp"

namespace ec {

/// Serialized form of a search result. Timing lives in a separate stats
/// sidecar so that identical runs produce byte-identical records.
struct ExplanationRecord {
    int version = 1;
    std::string image;
    std::optional<int> target;
    int predicted_class = 0;
    bool found = false;
    std::optional<int> counterfactual_class;
    std::vector<int> segments;
    /// score_reduction in any-class mode, target_gap_gain in target mode.
    double gain = 0.0;
    std::uint64_t evaluations = 0;
    bool irreducible_checked = false;
    ReplacementStrategy replacement = ImageMean{};
    std::optional<SegmentationParams> segmentation;
    std::uint64_t seed = 0;
    /// Present only when found is false.
    std::optional<std::string> reason;
    std::optional<std::vector<int>> best_partial_segments;
    std::optional<double> best_partial_priority;

    bool operator==(const ExplanationRecord&) const = default;
};

ExplanationRecord make_record(const SearchOutcome& outcome, const std::string& image_path,
                              const SearchConfig& config, const std::optional<SegmentationParams>& segmentation);

nlohmann::json to_json(const ExplanationRecord& record);
/// Rejects unknown fields and missing required ones with Errc::Format.
ExplanationRecord record_from_json(const nlohmann::json& j);

/// Canonical text: sorted keys, two-space indent, trailing newline.
std::string serialize(const ExplanationRecord& record);
ExplanationRecord parse_record(const std::string& text);

}  // namespace ec
