#include "ec/io.hpp"

#include <png.h>

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ec/detail/overloaded.hpp"

namespace ec {

using nlohmann::json;

namespace {

struct PngReadState {
    const Bytes* bytes;
    std::size_t pos;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
    auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (state->pos + count > state->bytes->size()) png_error(png, "truncated PNG");
    std::memcpy(out, state->bytes->data() + state->pos, count);
    state->pos += count;
}

void png_write_to_memory(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_throw(png_structp, png_const_charp message) {
    throw Error(Errc::Format, std::string("PNG: ") + message);
}

void png_warn(png_structp, png_const_charp) {}

// Raw 8/16-bit sample raster decoded from a PNG, channels 1 or 3.
struct RawRaster {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 8;
    std::vector<std::uint16_t> samples;
};

RawRaster decode_png_raw(const Bytes& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw Error(Errc::Format, "not a PNG stream");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn);
    if (!png) throw Error(Errc::Format, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};

    PngReadState state{&bytes, 0};
    png_set_read_fn(png, &state, png_read_from_memory);
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);  // host order for little-endian reads below
    png_read_update_info(png, info);

    RawRaster raw;
    raw.width = int(png_get_image_width(png, info));
    raw.height = int(png_get_image_height(png, info));
    raw.channels = png_get_channels(png, info);
    raw.bit_depth = png_get_bit_depth(png, info);
    if (raw.channels != 1 && raw.channels != 3) throw Error(Errc::Format, "unsupported PNG channel layout");

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> data(rowbytes * std::size_t(raw.height));
    std::vector<png_bytep> rows(std::size_t(raw.height));
    for (int y = 0; y < raw.height; ++y) rows[std::size_t(y)] = data.data() + std::size_t(y) * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    const std::size_t count = std::size_t(raw.width) * std::size_t(raw.height) * std::size_t(raw.channels);
    raw.samples.resize(count);
    for (int y = 0; y < raw.height; ++y) {
        const png_bytep row = rows[std::size_t(y)];
        const std::size_t per_row = std::size_t(raw.width) * std::size_t(raw.channels);
        for (std::size_t i = 0; i < per_row; ++i) {
            std::uint16_t v;
            if (raw.bit_depth == 16) {
                std::memcpy(&v, row + 2 * i, 2);
            } else {
                v = row[i];
            }
            raw.samples[std::size_t(y) * per_row + i] = v;
        }
    }
    return raw;
}

Bytes encode_png_raw(int width, int height, int channels, int bit_depth, const std::vector<std::uint16_t>& samples) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn);
    if (!png) throw Error(Errc::Format, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};

    Bytes out;
    png_set_write_fn(png, &out, png_write_to_memory, png_flush_noop);
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), bit_depth,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t per_row = std::size_t(width) * std::size_t(channels);
    const std::size_t bytes_per_sample = bit_depth == 16 ? 2 : 1;
    std::vector<png_byte> row(per_row * bytes_per_sample);
    for (int y = 0; y < height; ++y) {
        for (std::size_t i = 0; i < per_row; ++i) {
            const std::uint16_t v = samples[std::size_t(y) * per_row + i];
            if (bit_depth == 16) {
                row[2 * i] = png_byte(v >> 8);
                row[2 * i + 1] = png_byte(v & 0xff);
            } else {
                row[i] = png_byte(v);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    return out;
}

bool is_space(int c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

}  // namespace

Bytes read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& data) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    out.write(data.data(), std::streamsize(data.size()));
    if (!out) throw Error(Errc::Io, "short write to " + path.string());
}

Image decode_png(const Bytes& bytes) {
    auto raw = decode_png_raw(bytes);
    const double scale = raw.bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<double> values(raw.samples.size());
    std::transform(raw.samples.begin(), raw.samples.end(), values.begin(),
                   [scale](std::uint16_t v) { return double(v) / scale; });
    return Image(raw.width, raw.height, raw.channels, std::move(values));
}

Image decode_pnm(const Bytes& bytes) {
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (is_space(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&] {
        skip_ws();
        long v = 0;
        std::size_t start = pos;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos++] - '0');
            if (v > 1L << 30) throw Error(Errc::Format, "PNM header value too large");
        }
        if (pos == start) throw Error(Errc::Format, "malformed PNM header");
        return int(v);
    };

    if (bytes.size() < 2 || bytes[0] != 'P') throw Error(Errc::Format, "not a PNM stream");
    const char kind = char(bytes[1]);
    int channels;
    bool binary;
    switch (kind) {
        case '2': channels = 1; binary = false; break;
        case '3': channels = 3; binary = false; break;
        case '5': channels = 1; binary = true; break;
        case '6': channels = 3; binary = true; break;
        default: throw Error(Errc::Format, std::string("unsupported PNM type P") + kind);
    }
    pos = 2;
    const int width = read_int();
    const int height = read_int();
    const int maxval = read_int();
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) throw Error(Errc::Format, "bad PNM header");

    const std::size_t count = std::size_t(width) * std::size_t(height) * std::size_t(channels);
    std::vector<double> values(count);
    if (binary) {
        ++pos;  // single whitespace byte before the raster
        const std::size_t bps = maxval > 255 ? 2 : 1;
        if (pos + count * bps > bytes.size()) throw Error(Errc::Format, "truncated PNM raster");
        for (std::size_t i = 0; i < count; ++i) {
            unsigned v = bps == 2 ? (unsigned(bytes[pos + 2 * i]) << 8) | bytes[pos + 2 * i + 1] : bytes[pos + i];
            if (v > unsigned(maxval)) throw Error(Errc::Format, "PNM sample exceeds maxval");
            values[i] = double(v) / maxval;
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            int v = read_int();
            if (v > maxval) throw Error(Errc::Format, "PNM sample exceeds maxval");
            values[i] = double(v) / maxval;
        }
    }
    return Image(width, height, channels, std::move(values));
}

Image decode_image(const Bytes& bytes) {
    if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P') return decode_pnm(bytes);
    throw Error(Errc::Format, "unrecognized image format (expected PNG or PNM)");
}

Image read_image(const fs::path& path) {
    try {
        return decode_image(read_file(path));
    } catch (const Error& e) {
        if (e.code() == Errc::Format) throw Error(Errc::Format, path.string() + ": " + e.what());
        throw;
    }
}

Bytes encode_png(const Image& image, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) throw Error(Errc::InvalidArgument, "PNG bit depth must be 8 or 16");
    const double scale = bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<std::uint16_t> samples(image.values().size());
    std::transform(image.values().begin(), image.values().end(), samples.begin(), [scale](double v) {
        return std::uint16_t(std::lround(std::clamp(v, 0.0, 1.0) * scale));
    });
    return encode_png_raw(image.width(), image.height(), image.channels(), bit_depth, samples);
}

void write_png(const fs::path& path, const Image& image, int bit_depth) {
    auto bytes = encode_png(image, bit_depth);
    write_file(path, std::string(bytes.begin(), bytes.end()));
}

void write_label_png(const fs::path& path, const SegmentMap& segmap) {
    if (segmap.segment_count() > 65536) throw Error(Errc::InvalidArgument, "too many segments for a 16-bit label PNG");
    std::vector<std::uint16_t> samples(segmap.labels().begin(), segmap.labels().end());
    auto bytes = encode_png_raw(segmap.width(), segmap.height(), 1, 16, samples);
    write_file(path, std::string(bytes.begin(), bytes.end()));
}

SegmentMap read_label_png(const fs::path& path) {
    auto raw = decode_png_raw(read_file(path));
    if (raw.channels != 1) throw Error(Errc::Format, path.string() + ": label PNG must be single-channel");
    std::vector<std::int32_t> labels(raw.samples.begin(), raw.samples.end());
    const int count = labels.empty() ? 1 : *std::max_element(labels.begin(), labels.end()) + 1;
    SegmentMap segmap(raw.width, raw.height, std::move(labels), count);
    std::vector<bool> seen(std::size_t(count), false);
    for (auto l : segmap.labels()) seen[std::size_t(l)] = true;
    for (std::size_t id = 0; id < seen.size(); ++id) {
        if (!seen[id]) throw Error(Errc::NonContiguousLabels, path.string() + ": segment id " + std::to_string(id) + " unused", std::int64_t(id));
    }
    return segmap;
}

Image render_mask(const SegmentMap& segmap, const SegmentSet& set) {
    std::vector<double> values(segmap.pixel_count());
    auto labels = segmap.labels();
    for (std::size_t p = 0; p < values.size(); ++p) values[p] = set.contains(labels[p]) ? 1.0 : 0.0;
    return Image(segmap.width(), segmap.height(), 1, std::move(values));
}

Image render_explanation(const Image& image, const SegmentMap& segmap, const SegmentSet& set) {
    require_valid_pair(image, segmap);
    Image out(image.width(), image.height(), image.channels(), 0.5);
    auto labels = segmap.labels();
    const auto ch = std::size_t(image.channels());
    for (std::size_t p = 0; p < labels.size(); ++p) {
        if (!set.contains(labels[p])) continue;
        for (std::size_t c = 0; c < ch; ++c) out.values()[p * ch + c] = image.values()[p * ch + c];
    }
    return out;
}

Image render_boundaries(const Image& image, const SegmentMap& segmap) {
    require_valid_pair(image, segmap);
    const int w = image.width();
    const int h = image.height();
    Image out(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool edge = (x + 1 < w && segmap(x + 1, y) != segmap(x, y)) ||
                              (y + 1 < h && segmap(x, y + 1) != segmap(x, y));
            for (int c = 0; c < 3; ++c) {
                if (edge) {
                    out(x, y, c) = c == 0 ? 1.0 : 0.0;
                } else {
                    out(x, y, c) = image(x, y, image.channels() == 3 ? c : 0);
                }
            }
        }
    }
    return out;
}

std::string base64_encode(const Bytes& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), int(bytes.size()));
    out.resize(std::size_t(n));
    return out;
}

Bytes base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw Error(Errc::Format, "base64 length is not a multiple of 4");
    Bytes out(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), int(text.size()));
    if (n < 0) throw Error(Errc::Format, "invalid base64");
    std::size_t padding = 0;
    if (!text.empty() && text.back() == '=') ++padding;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
    out.resize(std::size_t(n) - padding);
    return out;
}

json to_json(const ReplacementStrategy& strategy) {
    json j = {{"type", tag(strategy)}};
    std::visit(detail::overloaded{
                   [&](const ConstantColor& c) { j["rgb"] = c.rgb; },
                   [&](const Blur& b) { j["sigma"] = b.sigma; },
                   [&](const RandomPixels& r) { j["seed"] = r.seed; },
                   [](const auto&) {},
               },
               strategy);
    return j;
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
    if (!j.is_object()) throw Error(Errc::Format, what + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; })) {
            throw Error(Errc::Format, what + ": unknown field '" + it.key() + "'");
        }
    }
}

}  // namespace

ReplacementStrategy replacement_from_json(const json& j) {
    try {
        const std::string type = j.at("type").get<std::string>();
        ReplacementStrategy out;
        if (type == "color") {
            reject_unknown(j, {"type", "rgb"}, "replacement");
            out = ConstantColor{j.at("rgb").get<std::array<double, 3>>()};
        } else if (type == "blur") {
            reject_unknown(j, {"type", "sigma"}, "replacement");
            out = Blur{j.at("sigma").get<double>()};
        } else if (type == "random") {
            reject_unknown(j, {"type", "seed"}, "replacement");
            out = RandomPixels{j.at("seed").get<std::uint64_t>()};
        } else {
            reject_unknown(j, {"type"}, "replacement");
            out = parse_replacement(type);
        }
        validate(out);
        return out;
    } catch (const json::exception& e) {
        throw Error(Errc::Format, std::string("replacement: ") + e.what());
    }
}

json to_json(const SegmentationParams& params) {
    return std::visit(detail::overloaded{
                          [](const GridParams& g) { return json{{"method", "grid"}, {"cell", g.cell}}; },
                          [](const SlicParams& s) {
                              return json{{"method", "slic"},
                                          {"n_segments", s.n_segments},
                                          {"compactness", s.compactness},
                                          {"iterations", s.iterations}};
                          },
                          [](const QuickShiftParams& q) {
                              return json{{"method", "quickshift"},
                                          {"kernel_size", q.kernel_size},
                                          {"max_dist", q.max_dist},
                                          {"ratio", q.ratio}};
                          },
                      },
                      params);
}

SegmentationParams segmentation_from_json(const json& j) {
    try {
        const std::string method = j.at("method").get<std::string>();
        SegmentationParams out;
        if (method == "grid") {
            reject_unknown(j, {"method", "cell"}, "segmentation");
            out = GridParams{j.at("cell").get<int>()};
        } else if (method == "slic") {
            reject_unknown(j, {"method", "n_segments", "compactness", "iterations"}, "segmentation");
            out = SlicParams{j.at("n_segments").get<int>(), j.at("compactness").get<double>(),
                             j.at("iterations").get<int>()};
        } else if (method == "quickshift") {
            reject_unknown(j, {"method", "kernel_size", "max_dist", "ratio"}, "segmentation");
            out = QuickShiftParams{j.at("kernel_size").get<double>(), j.at("max_dist").get<double>(),
                                   j.at("ratio").get<double>()};
        } else {
            throw Error(Errc::Format, "unknown segmentation method '" + method + "'");
        }
        validate(out);
        return out;
    } catch (const json::exception& e) {
        throw Error(Errc::Format, std::string("segmentation: ") + e.what());
    }
}

json to_json(const LinearModel& model) {
    return json{{"width", model.width},       {"height", model.height}, {"channels", model.channels},
                {"weights", model.weights},   {"biases", model.biases}};
}

LinearModel linear_model_from_json(const json& j) {
    try {
        reject_unknown(j, {"width", "height", "channels", "weights", "biases"}, "linear model");
        LinearModel m;
        m.width = j.at("width").get<int>();
        m.height = j.at("height").get<int>();
        m.channels = j.at("channels").get<int>();
        m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
        m.biases = j.at("biases").get<std::vector<double>>();
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw Error(Errc::Format, std::string("linear model: ") + e.what());
    }
}

LinearModel load_linear_model(const fs::path& path) {
    auto bytes = read_file(path);
    json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw Error(Errc::Format, path.string() + ": invalid JSON");
    return linear_model_from_json(j);
}

void save_linear_model(const fs::path& path, const LinearModel& model) {
    write_file(path, to_json(model).dump() + "\n");
}

std::vector<std::string> read_labels_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot open labels file " + path.string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        names.push_back(line);
    }
    while (!names.empty() && names.back().empty()) names.pop_back();
    return names;
}

std::vector<SegmentSet> read_segment_sets(const fs::path& path) {
    auto bytes = read_file(path);
    json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded() || !j.is_array()) throw Error(Errc::Format, path.string() + ": expected a JSON array of id arrays");
    std::vector<SegmentSet> sets;
    try {
        for (const auto& item : j) sets.emplace_back(item.get<std::vector<int>>());
    } catch (const json::exception& e) {
        throw Error(Errc::Format, path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(Errc::Format, path.string() + ": " + e.what());
    }
    return sets;
}

}  // namespace ec
