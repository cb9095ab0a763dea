#include "ec/image.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace ec {

namespace {

void check_shape(int width, int height, int channels) {
    if (width <= 0 || height <= 0) {
        throw Error(Errc::InvalidArgument, "image dimensions must be positive");
    }
    if (channels != 1 && channels != 3) {
        throw Error(Errc::InvalidArgument, "image must have 1 or 3 channels, got " + std::to_string(channels));
    }
}

}  // namespace

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    check_shape(width, height, channels);
    if (!std::isfinite(fill) || fill < 0.0 || fill > 1.0) {
        throw Error(Errc::InvalidArgument, "fill intensity outside [0,1]");
    }
    data_.assign(pixel_count() * std::size_t(channels), fill);
}

Image::Image(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_shape(width, height, channels);
    if (data_.size() != pixel_count() * std::size_t(channels)) {
        throw Error(Errc::InvalidArgument, "image data length does not match width*height*channels");
    }
    for (double v : data_) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw Error(Errc::InvalidArgument, "image intensity outside [0,1]");
        }
    }
}

SegmentMap::SegmentMap(int width, int height, std::vector<std::int32_t> labels, int segment_count)
    : width_(width), height_(height), labels_(std::move(labels)), segment_count_(segment_count) {
    if (width <= 0 || height <= 0) {
        throw Error(Errc::InvalidArgument, "segment map dimensions must be positive");
    }
    if (labels_.size() != std::size_t(width) * std::size_t(height)) {
        throw Error(Errc::InvalidArgument, "label array length does not match width*height");
    }
    if (segment_count <= 0) {
        throw Error(Errc::InvalidArgument, "segment_count must be positive");
    }
}

SegmentMap SegmentMap::from_labels(int width, int height, std::vector<std::int32_t> labels) {
    std::map<std::int32_t, std::int32_t> remap;
    for (auto l : labels) {
        if (l < 0) throw Error(Errc::LabelOutOfRange, "negative label", l);
        remap.emplace(l, 0);
    }
    std::int32_t next = 0;
    for (auto& [from, to] : remap) to = next++;
    for (auto& l : labels) l = remap[l];
    return SegmentMap(width, height, std::move(labels), std::max<std::int32_t>(next, 1));
}

std::vector<std::size_t> SegmentMap::segment_sizes() const {
    std::vector<std::size_t> sizes(std::size_t(segment_count_), 0);
    for (auto l : labels_) {
        if (l >= 0 && l < segment_count_) ++sizes[std::size_t(l)];
    }
    return sizes;
}

std::optional<Error> validate_pair(const Image& image, const SegmentMap& segmap) {
    if (image.width() != segmap.width() || image.height() != segmap.height()) {
        return Error(Errc::DimensionMismatch,
                     "image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                         " but segment map is " + std::to_string(segmap.width()) + "x" +
                         std::to_string(segmap.height()));
    }
    std::vector<bool> seen(std::size_t(segmap.segment_count()), false);
    for (auto l : segmap.labels()) {
        if (l < 0 || l >= segmap.segment_count()) {
            return Error(Errc::LabelOutOfRange, "label " + std::to_string(l) + " outside [0, segment_count)", l);
        }
        seen[std::size_t(l)] = true;
    }
    for (std::size_t id = 0; id < seen.size(); ++id) {
        if (!seen[id]) {
            return Error(Errc::NonContiguousLabels, "segment id " + std::to_string(id) + " has no pixels",
                         std::int64_t(id));
        }
    }
    return std::nullopt;
}

void require_valid_pair(const Image& image, const SegmentMap& segmap) {
    if (auto err = validate_pair(image, segmap)) throw *err;
}

}  // namespace ec
