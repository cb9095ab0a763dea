#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace ec {

/// One raw score per class. Scores are treated as opaque ordinals: no
/// normalization is applied anywhere in the engine.
class ClassScores {
public:
    ClassScores() = default;
    /// Throws InvalidArgument unless there are at least two finite entries.
    explicit ClassScores(std::vector<double> scores);

    std::size_t class_count() const noexcept { return scores_.size(); }
    double operator[](std::size_t cls) const noexcept { return scores_[cls]; }
    std::span<const double> values() const noexcept { return scores_; }

    bool operator==(const ClassScores&) const = default;

private:
    std::vector<double> scores_;
};

/// Argmax over the scores; exact ties go to the lowest class index.
int predicted_class(const ClassScores& scores) noexcept;

/// Strictly increasing set of segment ids.
class SegmentSet {
public:
    SegmentSet() = default;
    /// Sorts the ids; throws InvalidArgument on duplicates or negative ids.
    explicit SegmentSet(std::vector<int> ids);
    SegmentSet(std::initializer_list<int> ids) : SegmentSet(std::vector<int>(ids)) {}

    /// Copy of this set with `id` added. `id` must not already be present.
    SegmentSet with(int id) const;
    bool contains(int id) const noexcept;

    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    const std::vector<int>& ids() const noexcept { return ids_; }
    auto begin() const noexcept { return ids_.begin(); }
    auto end() const noexcept { return ids_.end(); }

    auto operator<=>(const SegmentSet&) const = default;
    bool operator==(const SegmentSet&) const = default;

    std::string to_string() const;

private:
    std::vector<int> ids_;
};

struct SegmentSetHash {
    std::size_t operator()(const SegmentSet& set) const noexcept;
};

// Replacement strategies: how "removed" pixels are filled in.

struct ConstantColor {
    /// For grayscale images the mean of the three components is used.
    std::array<double, 3> rgb{0.0, 0.0, 0.0};
    bool operator==(const ConstantColor&) const = default;
};
struct ImageMean {
    bool operator==(const ImageMean&) const = default;
};
struct ImageMode {
    bool operator==(const ImageMode&) const = default;
};
struct SegmentMean {
    bool operator==(const SegmentMean&) const = default;
};
struct NeighborMean {
    bool operator==(const NeighborMean&) const = default;
};
struct Blur {
    double sigma = 1.0;
    bool operator==(const Blur&) const = default;
};
struct RandomPixels {
    std::uint64_t seed = 0;
    bool operator==(const RandomPixels&) const = default;
};

using ReplacementStrategy =
    std::variant<ConstantColor, ImageMean, ImageMode, SegmentMean, NeighborMean, Blur, RandomPixels>;

void validate(const ReplacementStrategy& strategy);
/// Short tag: color, mean, mode, segment-mean, neighbor-mean, blur, random.
std::string tag(const ReplacementStrategy& strategy);
/// Parses the command-line form, e.g. "mean", "blur:2.5", "random:7", "color:0,0.5,1".
ReplacementStrategy parse_replacement(const std::string& text);

// Segmentation methods and their parameters.

struct GridParams {
    int cell = 16;
    bool operator==(const GridParams&) const = default;
};
struct SlicParams {
    int n_segments = 40;
    double compactness = 10.0;
    int iterations = 10;
    bool operator==(const SlicParams&) const = default;
};
struct QuickShiftParams {
    double kernel_size = 4.0;
    double max_dist = 8.0;
    double ratio = 0.5;
    bool operator==(const QuickShiftParams&) const = default;
};

using SegmentationParams = std::variant<GridParams, SlicParams, QuickShiftParams>;

void validate(const SegmentationParams& params);
/// grid, slic or quickshift.
std::string tag(const SegmentationParams& params);

using Millis = std::chrono::milliseconds;

struct SearchConfig {
    /// nullopt searches for any class change; a value searches for that class.
    std::optional<int> target;
    /// Number of best-first expansions allowed after the singleton pass.
    std::optional<std::uint64_t> max_iterations;
    std::optional<Millis> max_time = Millis(15000);
    bool refine_irreducible = false;
    Millis refine_time = Millis(15000);
    ReplacementStrategy replacement = ImageMean{};
    /// Recorded for provenance; RandomPixels carries the seed it uses.
    std::uint64_t rng_seed = 0;

    /// Throws InvalidArgument if neither budget is finite or the strategy is invalid.
    void validate() const;
};

struct Explanation {
    SegmentSet segments;
    int original_class = 0;
    int counterfactual_class = 0;
    std::optional<int> target;
    /// Predicted-class score reduction p_c - p_c' (any-class mode), or the
    /// gain in target-minus-predicted gap over the original image (target mode).
    double gain = 0.0;
    std::uint64_t evaluations = 0;
    double elapsed_ms = 0.0;
    bool irreducible_checked = false;
    ReplacementStrategy replacement = ImageMean{};
    std::optional<SegmentationParams> segmentation;
};

}  // namespace ec
