#pragma once

#include <cstdint>
#include <vector>

#include "ec/image.hpp"
#include "ec/types.hpp"

namespace ec {

/// Separable Gaussian blur per channel. Kernel radius ceil(3 * sigma), weights
/// normalized to sum 1, borders clamped.
Image blur_image(const Image& image, double sigma);

/// Uniform value in [0,1) keyed by (seed, pixel index, channel). Independent
/// of the order in which pixels are visited.
double random_intensity(std::uint64_t seed, std::size_t pixel, int channel) noexcept;

/// Replacement context for one (image, segment map, strategy) triple.
///
/// All statistics are taken from the original image once at construction, so
/// apply() is a pure function of the segment set. Only NeighborMean depends
/// on the set itself: neighbors that are removed too are excluded, and a
/// segment without remaining neighbors falls back to the image mean.
class Perturber {
public:
    Perturber(Image image, SegmentMap segmap, ReplacementStrategy strategy);

    /// Original image with every pixel of `set` replaced. Throws
    /// SegmentIdOutOfRange for ids >= segment_count.
    Image apply(const SegmentSet& set) const;

    const Image& original() const noexcept { return image_; }
    const SegmentMap& segments() const noexcept { return segmap_; }
    const ReplacementStrategy& strategy() const noexcept { return strategy_; }
    int segment_count() const noexcept { return segmap_.segment_count(); }

    /// Pixel indices of one segment, in raster order.
    const std::vector<std::size_t>& pixels_of(int segment) const { return pixels_[std::size_t(segment)]; }
    /// Ids of the segments 4-adjacent to `segment`, ascending.
    const std::vector<int>& neighbors_of(int segment) const { return neighbors_[std::size_t(segment)]; }

private:
    void fill_uniform(Image& out, int segment, const double* values) const;

    Image image_;
    SegmentMap segmap_;
    ReplacementStrategy strategy_;
    std::vector<std::vector<std::size_t>> pixels_;
    std::vector<std::vector<int>> neighbors_;
    std::vector<double> image_mean_;
    std::vector<double> image_mode_;
    std::vector<double> segment_sums_;  // segment_count x channels
    Image blurred_;
};

/// One-shot form of Perturber::apply.
Image remove_segments(const Image& image, const SegmentMap& segmap, const SegmentSet& set,
                      const ReplacementStrategy& strategy);

}  // namespace ec
