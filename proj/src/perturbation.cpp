#include "ec/perturbation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "ec/detail/overloaded.hpp"

namespace ec {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> k(std::size_t(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-double(i) * i / (2.0 * sigma * sigma));
        k[std::size_t(i + radius)] = v;
        total += v;
    }
    for (auto& v : k) v /= total;
    return k;
}

}  // namespace

double random_intensity(std::uint64_t seed, std::size_t pixel, int channel) noexcept {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ std::uint64_t(pixel));
    h = splitmix64(h ^ std::uint64_t(channel));
    return double(h >> 11) * 0x1.0p-53;
}

Image blur_image(const Image& image, double sigma) {
    validate(ReplacementStrategy{Blur{sigma}});
    const auto kernel = gaussian_kernel(sigma);
    const int radius = int(kernel.size() / 2);
    const int w = image.width();
    const int h = image.height();
    const int ch = image.channels();

    std::vector<double> tmp(image.values().size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    acc += kernel[std::size_t(i + radius)] * image(std::clamp(x + i, 0, w - 1), y, c);
                }
                tmp[image.offset(x, y, c)] = acc;
            }
        }
    }
    std::vector<double> out(tmp.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    acc += kernel[std::size_t(i + radius)] * tmp[image.offset(x, std::clamp(y + i, 0, h - 1), c)];
                }
                out[image.offset(x, y, c)] = std::clamp(acc, 0.0, 1.0);
            }
        }
    }
    return Image(w, h, ch, std::move(out));
}

Perturber::Perturber(Image image, SegmentMap segmap, ReplacementStrategy strategy)
    : image_(std::move(image)), segmap_(std::move(segmap)), strategy_(std::move(strategy)) {
    require_valid_pair(image_, segmap_);
    validate(strategy_);

    const int w = image_.width();
    const int h = image_.height();
    const int ch = image_.channels();
    const auto l = std::size_t(segmap_.segment_count());
    const auto labels = segmap_.labels();
    const auto values = image_.values();

    pixels_.resize(l);
    for (std::size_t p = 0; p < labels.size(); ++p) pixels_[std::size_t(labels[p])].push_back(p);

    std::vector<std::set<int>> adj(l);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int a = segmap_(x, y);
            if (x + 1 < w && segmap_(x + 1, y) != a) {
                adj[std::size_t(a)].insert(segmap_(x + 1, y));
                adj[std::size_t(segmap_(x + 1, y))].insert(a);
            }
            if (y + 1 < h && segmap_(x, y + 1) != a) {
                adj[std::size_t(a)].insert(segmap_(x, y + 1));
                adj[std::size_t(segmap_(x, y + 1))].insert(a);
            }
        }
    }
    neighbors_.resize(l);
    for (std::size_t s = 0; s < l; ++s) neighbors_[s].assign(adj[s].begin(), adj[s].end());

    image_mean_.assign(std::size_t(ch), 0.0);
    segment_sums_.assign(l * std::size_t(ch), 0.0);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        for (int c = 0; c < ch; ++c) {
            const double v = values[p * std::size_t(ch) + std::size_t(c)];
            image_mean_[std::size_t(c)] += v;
            segment_sums_[std::size_t(labels[p]) * std::size_t(ch) + std::size_t(c)] += v;
        }
    }
    for (auto& m : image_mean_) m /= double(image_.pixel_count());

    // Mode over 256 quantization bins per channel; the lowest bin wins ties.
    image_mode_.assign(std::size_t(ch), 0.0);
    for (int c = 0; c < ch; ++c) {
        std::array<std::size_t, 256> hist{};
        for (std::size_t p = 0; p < labels.size(); ++p) {
            ++hist[std::size_t(std::lround(values[p * std::size_t(ch) + std::size_t(c)] * 255.0))];
        }
        const auto best = std::max_element(hist.begin(), hist.end()) - hist.begin();
        image_mode_[std::size_t(c)] = double(best) / 255.0;
    }

    if (const auto* b = std::get_if<Blur>(&strategy_)) blurred_ = blur_image(image_, b->sigma);
}

void Perturber::fill_uniform(Image& out, int segment, const double* values) const {
    const int ch = out.channels();
    auto data = out.values();
    for (std::size_t p : pixels_of(segment)) {
        for (int c = 0; c < ch; ++c) data[p * std::size_t(ch) + std::size_t(c)] = values[c];
    }
}

Image Perturber::apply(const SegmentSet& set) const {
    for (int id : set) {
        if (id >= segment_count()) {
            throw Error(Errc::SegmentIdOutOfRange,
                        "segment " + std::to_string(id) + " >= segment_count " + std::to_string(segment_count()),
                        id);
        }
    }
    Image out = image_;
    const int ch = out.channels();
    const auto uch = std::size_t(ch);
    auto data = out.values();

    for (int id : set) {
        std::visit(detail::overloaded{
                       [&](const ConstantColor& cc) {
                           std::array<double, 3> v = cc.rgb;
                           if (ch == 1) v[0] = (cc.rgb[0] + cc.rgb[1] + cc.rgb[2]) / 3.0;
                           fill_uniform(out, id, v.data());
                       },
                       [&](const ImageMean&) { fill_uniform(out, id, image_mean_.data()); },
                       [&](const ImageMode&) { fill_uniform(out, id, image_mode_.data()); },
                       [&](const SegmentMean&) {
                           std::array<double, 3> v{};
                           const double count = double(pixels_of(id).size());
                           for (std::size_t c = 0; c < uch; ++c) v[c] = segment_sums_[std::size_t(id) * uch + c] / count;
                           fill_uniform(out, id, v.data());
                       },
                       [&](const NeighborMean&) {
                           std::array<double, 3> sum{};
                           std::size_t count = 0;
                           for (int nb : neighbors_of(id)) {
                               if (set.contains(nb)) continue;
                               for (std::size_t c = 0; c < uch; ++c) sum[c] += segment_sums_[std::size_t(nb) * uch + c];
                               count += pixels_of(nb).size();
                           }
                           if (count == 0) {
                               fill_uniform(out, id, image_mean_.data());
                               return;
                           }
                           for (auto& v : sum) v /= double(count);
                           fill_uniform(out, id, sum.data());
                       },
                       [&](const Blur&) {
                           const auto blurred = blurred_.values();
                           for (std::size_t p : pixels_of(id)) {
                               for (std::size_t c = 0; c < uch; ++c) data[p * uch + c] = blurred[p * uch + c];
                           }
                       },
                       [&](const RandomPixels& r) {
                           for (std::size_t p : pixels_of(id)) {
                               for (int c = 0; c < ch; ++c) data[p * uch + std::size_t(c)] = random_intensity(r.seed, p, c);
                           }
                       },
                   },
                   strategy_);
    }
    return out;
}

Image remove_segments(const Image& image, const SegmentMap& segmap, const SegmentSet& set,
                      const ReplacementStrategy& strategy) {
    return Perturber(image, segmap, strategy).apply(set);
}

}  // namespace ec
