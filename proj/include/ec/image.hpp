#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ec/error.hpp"

namespace ec {

/// Dense raster with row-major, channel-interleaved intensities in [0,1].
/// Channels are 1 (grayscale) or 3 (RGB).
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, double fill = 0.0);
    Image(int width, int height, int channels, std::vector<double> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept { return std::size_t(width_) * std::size_t(height_); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t offset(int x, int y, int c = 0) const noexcept {
        return (std::size_t(y) * std::size_t(width_) + std::size_t(x)) * std::size_t(channels_) + std::size_t(c);
    }
    double operator()(int x, int y, int c = 0) const noexcept { return data_[offset(x, y, c)]; }
    double& operator()(int x, int y, int c = 0) noexcept { return data_[offset(x, y, c)]; }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }

    bool operator==(const Image&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Per-pixel segment labels. Ids are expected to be contiguous in
/// [0, segment_count); use validate_pair to check a map against an image.
class SegmentMap {
public:
    SegmentMap() = default;
    SegmentMap(int width, int height, std::vector<std::int32_t> labels, int segment_count);

    /// Builds a map from arbitrary non-negative labels, renumbering them to
    /// 0..n-1 in increasing order of the original label.
    static SegmentMap from_labels(int width, int height, std::vector<std::int32_t> labels);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int segment_count() const noexcept { return segment_count_; }
    std::size_t pixel_count() const noexcept { return labels_.size(); }

    std::int32_t operator()(int x, int y) const noexcept {
        return labels_[std::size_t(y) * std::size_t(width_) + std::size_t(x)];
    }
    std::span<const std::int32_t> labels() const noexcept { return labels_; }

    std::vector<std::size_t> segment_sizes() const;

    bool operator==(const SegmentMap&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::int32_t> labels_;
    int segment_count_ = 0;
};

/// Returns the first violation found, or nullopt when the map matches the
/// image dimensions and its labels cover [0, segment_count) without gaps.
std::optional<Error> validate_pair(const Image& image, const SegmentMap& segmap);

/// Throwing form of validate_pair.
void require_valid_pair(const Image& image, const SegmentMap& segmap);

}  // namespace ec
