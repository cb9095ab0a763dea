#include "ec/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "ec/detail/overloaded.hpp"

namespace ec {

namespace {

// Color features live on a 0..100 scale so the conventional compactness and
// quick shift defaults weigh color and position comparably.
constexpr double kColorScale = 100.0;

SegmentMap single_segment(const Image& image) {
    return SegmentMap(image.width(), image.height(),
                      std::vector<std::int32_t>(image.pixel_count(), 0), 1);
}

struct DisjointSets {
    explicit DisjointSets(std::size_t n) : parent(n), size(n, 0) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    std::vector<std::size_t> parent;
    std::vector<std::size_t> size;
};

}  // namespace

SegmentMap grid_segment(const Image& image, int cell) {
    validate(SegmentationParams{GridParams{cell}});
    const int cols = (image.width() + cell - 1) / cell;
    const int rows = (image.height() + cell - 1) / cell;
    std::vector<std::int32_t> labels(image.pixel_count());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            labels[std::size_t(y) * std::size_t(image.width()) + std::size_t(x)] = (y / cell) * cols + x / cell;
        }
    }
    return SegmentMap(image.width(), image.height(), std::move(labels), cols * rows);
}

SegmentMap enforce_connectivity(const SegmentMap& segmap) {
    const int w = segmap.width();
    const int h = segmap.height();
    const std::size_t n = segmap.pixel_count();
    auto labels = segmap.labels();

    // 4-connected components in raster order of their first pixel.
    constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> comp(n, kUnset);
    std::vector<std::int32_t> comp_label;
    std::vector<std::vector<std::size_t>> comp_pixels;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < n; ++start) {
        if (comp[start] != kUnset) continue;
        const std::size_t id = comp_label.size();
        comp_label.push_back(labels[start]);
        comp_pixels.emplace_back();
        comp[start] = id;
        stack.assign(1, start);
        while (!stack.empty()) {
            std::size_t p = stack.back();
            stack.pop_back();
            comp_pixels[id].push_back(p);
            const int x = int(p % std::size_t(w));
            const int y = int(p / std::size_t(w));
            auto visit = [&](int nx, int ny) {
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) return;
                std::size_t q = std::size_t(ny) * std::size_t(w) + std::size_t(nx);
                if (comp[q] == kUnset && labels[q] == labels[p]) {
                    comp[q] = id;
                    stack.push_back(q);
                }
            };
            visit(x - 1, y);
            visit(x + 1, y);
            visit(x, y - 1);
            visit(x, y + 1);
        }
    }

    const std::size_t comps = comp_label.size();
    std::int32_t max_label = *std::max_element(labels.begin(), labels.end());
    std::vector<std::size_t> main_comp(std::size_t(max_label) + 1, kUnset);
    for (std::size_t c = 0; c < comps; ++c) {
        auto& m = main_comp[std::size_t(comp_label[c])];
        if (m == kUnset || comp_pixels[c].size() > comp_pixels[m].size()) m = c;
    }

    DisjointSets sets(comps);
    std::vector<bool> anchored(comps, false);
    std::vector<std::vector<std::size_t>> members(comps);
    for (std::size_t c = 0; c < comps; ++c) {
        sets.size[c] = comp_pixels[c].size();
        members[c] = {c};
        anchored[c] = main_comp[std::size_t(comp_label[c])] == c;
    }

    for (std::size_t orphan = 0; orphan < comps; ++orphan) {
        if (anchored[orphan]) continue;
        const std::size_t root = sets.find(orphan);
        if (anchored[root]) continue;

        // Largest adjacent group, ties to the lowest root id.
        std::size_t best = kUnset;
        for (std::size_t member : members[root]) {
            for (std::size_t p : comp_pixels[member]) {
                const int x = int(p % std::size_t(w));
                const int y = int(p / std::size_t(w));
                const std::array<std::array<int, 2>, 4> nbrs{{{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}};
                for (auto [nx, ny] : nbrs) {
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    std::size_t other = sets.find(comp[std::size_t(ny) * std::size_t(w) + std::size_t(nx)]);
                    if (other == root) continue;
                    if (best == kUnset || sets.size[other] > sets.size[best] ||
                        (sets.size[other] == sets.size[best] && other < best)) {
                        best = other;
                    }
                }
            }
        }
        if (best == kUnset) continue;  // the island is the whole image
        sets.parent[root] = best;
        sets.size[best] += sets.size[root];
        members[best].insert(members[best].end(), members[root].begin(), members[root].end());
        members[root].clear();
    }

    std::vector<std::int32_t> out(n);
    for (std::size_t p = 0; p < n; ++p) out[p] = comp_label[sets.find(comp[p])];
    return SegmentMap::from_labels(w, h, std::move(out));
}

SegmentMap slic_segment(const Image& image, int n_segments, double compactness, int iterations) {
    validate(SegmentationParams{SlicParams{n_segments, compactness, iterations}});
    if (n_segments == 1) return single_segment(image);

    const int w = image.width();
    const int h = image.height();
    const int ch = image.channels();
    const double spacing = std::sqrt(double(image.pixel_count()) / double(n_segments));

    int nx = std::clamp(int(std::lround(w / spacing)), 1, w);
    int ny = std::clamp(int(std::lround(h / spacing)), 1, h);
    while (nx * ny > n_segments) {
        if (nx >= ny && nx > 1) {
            --nx;
        } else {
            --ny;
        }
    }

    struct Center {
        double x;
        double y;
        std::array<double, 3> color;
    };
    std::vector<Center> centers;
    centers.reserve(std::size_t(nx * ny));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            Center c{(i + 0.5) * w / nx, (j + 0.5) * h / ny, {}};
            const int px = std::min(int(c.x), w - 1);
            const int py = std::min(int(c.y), h - 1);
            for (int k = 0; k < ch; ++k) c.color[std::size_t(k)] = kColorScale * image(px, py, k);
            centers.push_back(c);
        }
    }

    const double spatial_weight = compactness / spacing;
    auto distance = [&](const Center& c, int x, int y) {
        double dc = 0.0;
        for (int k = 0; k < ch; ++k) {
            double d = kColorScale * image(x, y, k) - c.color[std::size_t(k)];
            dc += d * d;
        }
        return std::sqrt(dc) + spatial_weight * std::hypot(x + 0.5 - c.x, y + 0.5 - c.y);
    };

    const std::size_t n = image.pixel_count();
    std::vector<std::int32_t> labels(n, -1);
    std::vector<double> dist(n);
    for (int it = 0; it < iterations; ++it) {
        std::fill(labels.begin(), labels.end(), -1);
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const auto& c = centers[k];
            const int x0 = std::max(0, int(std::floor(c.x - spacing)));
            const int x1 = std::min(w - 1, int(std::ceil(c.x + spacing)));
            const int y0 = std::max(0, int(std::floor(c.y - spacing)));
            const int y1 = std::min(h - 1, int(std::ceil(c.y + spacing)));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const std::size_t p = std::size_t(y) * std::size_t(w) + std::size_t(x);
                    const double d = distance(c, x, y);
                    if (d < dist[p]) {
                        dist[p] = d;
                        labels[p] = std::int32_t(k);
                    }
                }
            }
        }
        // Pixels outside every search window fall back to the globally nearest center.
        for (std::size_t p = 0; p < n; ++p) {
            if (labels[p] >= 0) continue;
            const int x = int(p % std::size_t(w));
            const int y = int(p / std::size_t(w));
            for (std::size_t k = 0; k < centers.size(); ++k) {
                const double d = distance(centers[k], x, y);
                if (d < dist[p]) {
                    dist[p] = d;
                    labels[p] = std::int32_t(k);
                }
            }
        }

        std::vector<std::array<double, 5>> sums(centers.size(), std::array<double, 5>{});
        std::vector<std::size_t> counts(centers.size(), 0);
        for (std::size_t p = 0; p < n; ++p) {
            const int x = int(p % std::size_t(w));
            const int y = int(p / std::size_t(w));
            auto& s = sums[std::size_t(labels[p])];
            s[0] += x + 0.5;
            s[1] += y + 0.5;
            for (int k = 0; k < ch; ++k) s[std::size_t(2 + k)] += kColorScale * image(x, y, k);
            ++counts[std::size_t(labels[p])];
        }
        for (std::size_t k = 0; k < centers.size(); ++k) {
            if (counts[k] == 0) continue;
            const double inv = 1.0 / double(counts[k]);
            centers[k].x = sums[k][0] * inv;
            centers[k].y = sums[k][1] * inv;
            for (int c = 0; c < ch; ++c) centers[k].color[std::size_t(c)] = sums[k][std::size_t(2 + c)] * inv;
        }
    }

    return enforce_connectivity(SegmentMap::from_labels(w, h, std::move(labels)));
}

SegmentMap quickshift_segment(const Image& image, double kernel_size, double max_dist, double ratio) {
    validate(SegmentationParams{QuickShiftParams{kernel_size, max_dist, ratio}});

    const int w = image.width();
    const int h = image.height();
    const int ch = image.channels();
    const std::size_t n = image.pixel_count();

    std::vector<double> color(n * std::size_t(ch));
    for (std::size_t i = 0; i < color.size(); ++i) color[i] = ratio * kColorScale * image.values()[i];

    auto dist2 = [&](int x0, int y0, int x1, int y1) {
        const std::size_t a = (std::size_t(y0) * std::size_t(w) + std::size_t(x0)) * std::size_t(ch);
        const std::size_t b = (std::size_t(y1) * std::size_t(w) + std::size_t(x1)) * std::size_t(ch);
        double d = double(x1 - x0) * (x1 - x0) + double(y1 - y0) * (y1 - y0);
        for (int k = 0; k < ch; ++k) {
            const double dc = color[a + std::size_t(k)] - color[b + std::size_t(k)];
            d += dc * dc;
        }
        return d;
    };

    const int window = int(std::ceil(3.0 * kernel_size));
    const double inv_two_sigma2 = 1.0 / (2.0 * kernel_size * kernel_size);
    std::vector<double> density(n, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double e = 0.0;
            for (int v = std::max(0, y - window); v <= std::min(h - 1, y + window); ++v) {
                for (int u = std::max(0, x - window); u <= std::min(w - 1, x + window); ++u) {
                    e += std::exp(-dist2(x, y, u, v) * inv_two_sigma2);
                }
            }
            density[std::size_t(y) * std::size_t(w) + std::size_t(x)] = e;
        }
    }

    auto higher = [&](std::size_t q, std::size_t p) {
        return density[q] > density[p] || (density[q] == density[p] && q > p);
    };

    const int reach = int(std::ceil(max_dist));
    const double max_dist2 = max_dist * max_dist;
    std::vector<std::size_t> parent(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t p = std::size_t(y) * std::size_t(w) + std::size_t(x);
            parent[p] = p;
            double best = std::numeric_limits<double>::infinity();
            for (int v = std::max(0, y - reach); v <= std::min(h - 1, y + reach); ++v) {
                for (int u = std::max(0, x - reach); u <= std::min(w - 1, x + reach); ++u) {
                    const std::size_t q = std::size_t(v) * std::size_t(w) + std::size_t(u);
                    if (!higher(q, p)) continue;
                    const double d = dist2(x, y, u, v);
                    if (d <= max_dist2 && d < best) {
                        best = d;
                        parent[p] = q;
                    }
                }
            }
        }
    }

    // Parents always have strictly higher (density, index) rank, so chains terminate.
    std::vector<std::int32_t> labels(n);
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t r = p;
        while (parent[r] != r) r = parent[r];
        labels[p] = std::int32_t(r);
    }
    return SegmentMap::from_labels(w, h, std::move(labels));
}

SegmentMap segment(const Image& image, const SegmentationParams& params) {
    validate(params);
    return std::visit(detail::overloaded{
                          [&](const GridParams& g) { return grid_segment(image, g.cell); },
                          [&](const SlicParams& s) {
                              return slic_segment(image, s.n_segments, s.compactness, s.iterations);
                          },
                          [&](const QuickShiftParams& q) {
                              return quickshift_segment(image, q.kernel_size, q.max_dist, q.ratio);
                          },
                      },
                      params);
}

}  // namespace ec
