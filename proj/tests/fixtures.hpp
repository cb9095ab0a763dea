#pragma once

// Problem builders and brute-force oracles shared by the test binaries.
// Oracles deliberately avoid the engine's search and perturbation code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "ec/classifier.hpp"
#include "ec/image.hpp"
#include "ec/types.hpp"

namespace fixtures {

using ec::Image;
using ec::SegmentMap;
using ec::SegmentSet;

/// Square-cell grid labels, numbered row-major; partial cells at the edges.
inline SegmentMap grid_labels(int width, int height, int cell) {
    const int cols = (width + cell - 1) / cell;
    const int rows = (height + cell - 1) / cell;
    std::vector<std::int32_t> labels(std::size_t(width) * std::size_t(height));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) labels[std::size_t(y * width + x)] = (y / cell) * cols + x / cell;
    }
    return SegmentMap(width, height, std::move(labels), rows * cols);
}

/// 64x64 map with 37 segments: a 6x6 grid of 11-pixel cells plus a 4x4 block
/// carved out of the top-left cell.
inline SegmentMap carved37() {
    auto grid = grid_labels(64, 64, 11);
    std::vector<std::int32_t> labels(grid.labels().begin(), grid.labels().end());
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) labels[std::size_t(y * 64 + x)] = 36;
    }
    return SegmentMap(64, 64, std::move(labels), 37);
}

/// Linear problem in which removing segments (image-mean replacement) is
/// exactly additive: scores(S) = base + sum over s in S of delta[s].
///
/// The image is constant on each segment. Class c's weight on segment s is
/// delta[s][c] / (|s| * (m - x_s)), where m is the image mean, so replacing
/// segment s by m shifts score c by delta[s][c].
struct AdditiveProblem {
    Image image;
    SegmentMap segmap;
    ec::LinearModel model;
    std::vector<double> base;
    std::vector<std::vector<double>> delta;

    int classes() const { return int(base.size()); }
    int segments() const { return segmap.segment_count(); }

    ec::ClassifierHandle handle() const {
        return ec::ClassifierHandle(std::make_shared<ec::LinearClassifier>(model));
    }

    std::vector<double> oracle_scores(const std::vector<int>& removed) const {
        auto s = base;
        for (int id : removed) {
            for (std::size_t c = 0; c < s.size(); ++c) s[c] += delta[std::size_t(id)][c];
        }
        return s;
    }
    std::vector<double> oracle_scores(const SegmentSet& removed) const { return oracle_scores(removed.ids()); }
};

inline int argmax(const std::vector<double>& s) {
    return int(std::max_element(s.begin(), s.end()) - s.begin());
}

/// Builds an additive problem on a grayscale image. Segment intensities are
/// drawn from `seed`, quantized to 8 bits and kept well away from the image mean.
inline AdditiveProblem make_additive(SegmentMap segmap, std::vector<double> base,
                                     std::vector<std::vector<double>> delta, std::uint64_t seed = 1) {
    const int n = segmap.segment_count();
    const int k = int(base.size());
    if (int(delta.size()) != n) throw std::invalid_argument("delta rows must match segment count");
    std::vector<std::size_t> size(std::size_t(n), 0);
    for (auto l : segmap.labels()) ++size[std::size_t(l)];
    const double total = double(segmap.pixel_count());

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> low(0.05, 0.3), high(0.7, 0.95);
    std::vector<double> value(static_cast<std::size_t>(n));
    double mean = 0.0;
    for (int attempt = 0;; ++attempt) {
        mean = 0.0;
        for (int s = 0; s < n; ++s) {
            // On the 8-bit grid, so the image survives a PNG round trip unchanged.
            value[std::size_t(s)] = std::round(((rng() & 1) ? high(rng) : low(rng)) * 255.0) / 255.0;
            mean += value[std::size_t(s)] * double(size[std::size_t(s)]) / total;
        }
        bool separated = true;
        for (double v : value) separated = separated && std::abs(v - mean) > 0.1;
        if (separated) break;
        if (attempt > 1000) throw std::runtime_error("cannot separate segment intensities from the mean");
    }

    AdditiveProblem p;
    std::vector<double> pixels(segmap.pixel_count());
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = value[std::size_t(segmap.labels()[i])];
    p.image = Image(segmap.width(), segmap.height(), 1, std::move(pixels));

    p.model.width = segmap.width();
    p.model.height = segmap.height();
    p.model.channels = 1;
    p.model.weights.assign(std::size_t(k), std::vector<double>(segmap.pixel_count(), 0.0));
    p.model.biases.assign(std::size_t(k), 0.0);
    for (int c = 0; c < k; ++c) {
        double raw = 0.0;
        for (std::size_t i = 0; i < segmap.pixel_count(); ++i) {
            const auto s = std::size_t(segmap.labels()[i]);
            const double w = delta[s][std::size_t(c)] / (double(size[s]) * (mean - value[s]));
            p.model.weights[std::size_t(c)][i] = w;
            raw += w * value[s];
        }
        p.model.biases[std::size_t(c)] = base[std::size_t(c)] - raw;
    }
    p.segmap = std::move(segmap);
    p.base = std::move(base);
    p.delta = std::move(delta);
    return p;
}

/// Straightforward best-first search over oracle scores, written without the
/// engine's data structures: linear-scan frontier, std::set visited list.
struct ReferenceResult {
    bool found = false;
    std::vector<int> segments;
    std::uint64_t evaluations = 0;
    std::vector<int> best_partial;
    double best_partial_priority = 0.0;
};

inline ReferenceResult reference_search(const AdditiveProblem& p, std::optional<int> target) {
    const int n = p.segments();
    const int c = argmax(p.base);
    auto hit = [&](const std::vector<double>& s) { return target ? argmax(s) == *target : argmax(s) != c; };
    auto priority = [&](const std::vector<double>& s) {
        return target ? s[std::size_t(*target)] - s[std::size_t(c)] : p.base[std::size_t(c)] - s[std::size_t(c)];
    };
    auto key = [&](const std::vector<double>& s) {
        return target ? s[std::size_t(*target)] - p.base[std::size_t(*target)]
                      : p.base[std::size_t(c)] - s[std::size_t(c)];
    };

    struct Node {
        std::vector<int> set;
        double priority;
        std::uint64_t order;
        bool open;
    };
    std::vector<Node> nodes;
    std::set<std::vector<int>> visited;
    std::vector<std::pair<std::vector<int>, double>> hits;
    ReferenceResult r;
    bool have_partial = false;

    auto consider = [&](std::vector<int> set) {
        if (!visited.insert(set).second) return;
        ++r.evaluations;
        const auto s = p.oracle_scores(set);
        if (hit(s)) {
            hits.emplace_back(set, key(s));
            return;
        }
        const double pr = priority(s);
        if (!have_partial || pr > r.best_partial_priority) {
            have_partial = true;
            r.best_partial = set;
            r.best_partial_priority = pr;
        }
        nodes.push_back(Node{std::move(set), pr, nodes.size(), true});
    };

    for (int s = 0; s < n; ++s) consider({s});
    while (hits.empty()) {
        Node* best = nullptr;
        for (auto& node : nodes) {
            if (node.open && (!best || node.priority > best->priority)) best = &node;
        }
        if (!best) return r;
        best->open = false;
        const auto parent = best->set;
        for (int s = 0; s < n; ++s) {
            if (std::find(parent.begin(), parent.end(), s) != parent.end()) continue;
            auto child = parent;
            child.insert(std::upper_bound(child.begin(), child.end(), s), s);
            consider(std::move(child));
        }
    }
    auto chosen = hits.begin();
    for (auto it = hits.begin(); it != hits.end(); ++it) {
        if (it->second > chosen->second) chosen = it;
    }
    r.found = true;
    r.segments = chosen->first;
    return r;
}

/// Calls f(subset) for every non-empty subset of `ids` (as bitmask-selected
/// vectors in increasing mask order) until f returns true.
template <class F>
bool any_subset(const std::vector<int>& ids, bool proper, F&& f) {
    const std::uint64_t n = ids.size();
    const std::uint64_t last = (std::uint64_t{1} << n) - (proper ? 1 : 0);
    for (std::uint64_t mask = 1; mask < last || (!proper && mask == last); ++mask) {
        std::vector<int> subset;
        for (std::uint64_t i = 0; i < n; ++i) {
            if (mask & (std::uint64_t{1} << i)) subset.push_back(ids[i]);
        }
        if (f(subset)) return true;
    }
    return false;
}

/// Pixel-level removal by the image mean, written independently of Perturber.
inline Image mean_removed(const Image& image, const SegmentMap& segmap, const std::vector<int>& removed) {
    const int ch = image.channels();
    std::vector<double> mean(std::size_t(ch), 0.0);
    auto values = image.values();
    for (std::size_t i = 0; i < values.size(); ++i) mean[i % std::size_t(ch)] += values[i];
    for (auto& m : mean) m /= double(image.pixel_count());
    std::vector<double> out(values.begin(), values.end());
    for (std::size_t px = 0; px < image.pixel_count(); ++px) {
        if (std::find(removed.begin(), removed.end(), segmap.labels()[px]) == removed.end()) continue;
        for (int c = 0; c < ch; ++c) out[px * std::size_t(ch) + std::size_t(c)] = mean[std::size_t(c)];
    }
    return Image(image.width(), image.height(), ch, std::move(out));
}

/// Dot-product scores of a linear model, independent of LinearClassifier.
inline std::vector<double> linear_scores(const ec::LinearModel& m, const Image& image) {
    std::vector<double> s(m.biases);
    auto v = image.values();
    for (std::size_t c = 0; c < s.size(); ++c) {
        for (std::size_t i = 0; i < v.size(); ++i) s[c] += m.weights[c][i] * v[i];
    }
    return s;
}

/// Random image with values on the 8-bit grid, as if loaded from a PNG.
inline Image random_image(std::mt19937_64& rng, int width, int height, int channels) {
    std::uniform_int_distribution<int> byte(0, 255);
    std::vector<double> v(std::size_t(width) * std::size_t(height) * std::size_t(channels));
    for (auto& x : v) x = byte(rng) / 255.0;
    return Image(width, height, channels, std::move(v));
}

inline ec::LinearModel random_model(std::mt19937_64& rng, int width, int height, int channels, int classes,
                                    double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    ec::LinearModel m;
    m.width = width;
    m.height = height;
    m.channels = channels;
    const std::size_t len = std::size_t(width) * std::size_t(height) * std::size_t(channels);
    for (int c = 0; c < classes; ++c) {
        std::vector<double> w(len);
        for (auto& x : w) x = normal(rng);
        m.weights.push_back(std::move(w));
        m.biases.push_back(normal(rng));
    }
    return m;
}

}  // namespace fixtures

#include <filesystem>
#include <unistd.h>

namespace fixtures {

/// Removes every scratch directory when the test binary exits.
struct ScratchCleanup {
    std::vector<std::filesystem::path> dirs;
    ~ScratchCleanup() {
        std::error_code ec;
        for (const auto& d : dirs) std::filesystem::remove_all(d, ec);
    }
};
inline ScratchCleanup scratch_cleanup;

/// Fresh scratch directory, removed and recreated on each call.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("ec_test_" + std::to_string(::getpid()) + "_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    scratch_cleanup.dirs.push_back(dir);
    return dir;
}

}  // namespace fixtures
