#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ec/classifier.hpp"
#include "ec/image.hpp"
#include "ec/io.hpp"
#include "ec/types.hpp"

namespace ec {

/// |intersection of all runs| / |union of all runs|; 1.0 when the union is empty.
double jaccard_stability(const std::vector<SegmentSet>& runs);

struct StabilityReport {
    double jaccard = 1.0;
    std::size_t run_count = 0;
    std::vector<std::size_t> per_run_sizes;
};

StabilityReport stability_report(const std::vector<SegmentSet>& runs);

struct RemovalCase {
    Image image;
    SegmentMap segmap;
    SegmentSet segments;
};

/// Fraction of cases whose removal changes the argmax class. Empty sets never do.
double counterfactual_rate(const std::vector<RemovalCase>& cases, const ClassifierHandle& classifier,
                           const ReplacementStrategy& strategy);

struct BenchItem {
    std::string name;
    Image image;
    SegmentMap segmap;
};

struct BenchImageResult {
    std::string name;
    double jaccard = 1.0;
    std::size_t found_runs = 0;
    std::size_t runs = 0;
    double mean_time_s = 0.0;
    std::uint64_t evaluations = 0;
    /// First error raised for this image (loading, segmentation or search).
    std::optional<std::string> error;
};

struct BenchReport {
    /// SEDC or SEDC-T.
    std::string method = "SEDC";
    double stability_pct = 100.0;
    double time_mean_s = 0.0;
    /// Population standard deviation of the per-image mean times.
    double time_std_s = 0.0;
    double counterfactual_pct = 0.0;
    /// Evaluations of the first run of each image, in dataset order.
    std::vector<std::uint64_t> evaluation_counts;
    std::size_t images = 0;
    std::size_t repeats = 0;
    std::size_t not_found_runs = 0;
    std::vector<BenchImageResult> per_image;
};

/// Runs the configured search `repeats` times per item. NotFound runs count
/// as empty explanations: they are excluded from the timing means and count
/// as non-counterfactual. A run that raises ec::Error is recorded as NotFound
/// and the message is kept on the image's row.
BenchReport run_bench(const std::vector<BenchItem>& items, const ClassifierHandle& classifier,
                      const SearchConfig& config, std::size_t repeats);

/// Loads and segments every image, then benchmarks it. Images that cannot be
/// loaded or segmented become rows of `repeats` NotFound runs.
BenchReport run_bench(const std::vector<fs::path>& dataset, const ClassifierHandle& classifier,
                      const SegmentationParams& params, const SearchConfig& config, std::size_t repeats);

nlohmann::json to_json(const BenchReport& report);
/// Plain-text table with rows stability (%), computation time (s), counterfactual (%).
std::string to_text(const BenchReport& report);

}  // namespace ec
