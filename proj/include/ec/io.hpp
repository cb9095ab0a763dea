#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ec/classifier.hpp"
#include "ec/image.hpp"
#include "ec/types.hpp"

namespace ec {

namespace fs = std::filesystem;
using Bytes = std::vector<std::uint8_t>;

// Raster I/O. Inputs may be PNG (8 or 16 bit, gray/RGB, alpha dropped,
// palettes expanded) or binary/ASCII PGM/PPM. Intensities are divided by the
// format's maximum value.
Image read_image(const fs::path& path);
Image decode_image(const Bytes& bytes);
Image decode_png(const Bytes& bytes);
Image decode_pnm(const Bytes& bytes);

/// PNG with 8 or 16 bits per sample, values rounded from [0,1].
Bytes encode_png(const Image& image, int bit_depth = 8);
void write_png(const fs::path& path, const Image& image, int bit_depth = 8);

/// 16-bit single-channel label raster.
void write_label_png(const fs::path& path, const SegmentMap& segmap);
/// Reads a label raster; ids must already be contiguous.
SegmentMap read_label_png(const fs::path& path);

/// 8-bit grayscale mask: 255 on pixels of `set`, 0 elsewhere.
Image render_mask(const SegmentMap& segmap, const SegmentSet& set);
/// Original pixels on `set`, neutral gray 0.5 elsewhere.
Image render_explanation(const Image& image, const SegmentMap& segmap, const SegmentSet& set);
/// RGB copy of the image with segment boundaries painted red.
Image render_boundaries(const Image& image, const SegmentMap& segmap);

std::string base64_encode(const Bytes& bytes);
Bytes base64_decode(const std::string& text);

Bytes read_file(const fs::path& path);
void write_file(const fs::path& path, const std::string& data);

// JSON forms of the parameter types.
nlohmann::json to_json(const ReplacementStrategy& strategy);
ReplacementStrategy replacement_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SegmentationParams& params);
SegmentationParams segmentation_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LinearModel& model);
LinearModel linear_model_from_json(const nlohmann::json& j);
LinearModel load_linear_model(const fs::path& path);
void save_linear_model(const fs::path& path, const LinearModel& model);

/// One class name per line; blank trailing lines ignored.
std::vector<std::string> read_labels_file(const fs::path& path);

/// JSON array of arrays of segment ids.
std::vector<SegmentSet> read_segment_sets(const fs::path& path);

}  // namespace ec
