#include "ec/types.hpp"

#include <cctype>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ec/detail/overloaded.hpp"
#include "ec/error.hpp"

namespace ec {

namespace {

using detail::overloaded;

double parse_double(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(Errc::InvalidArgument, "cannot parse " + what + " from '" + text + "'");
    }
}

}  // namespace

ClassScores::ClassScores(std::vector<double> scores) : scores_(std::move(scores)) {
    if (scores_.size() < 2) {
        throw Error(Errc::InvalidArgument, "class scores need at least two classes");
    }
    for (double s : scores_) {
        if (!std::isfinite(s)) throw Error(Errc::InvalidArgument, "class score is not finite");
    }
}

int predicted_class(const ClassScores& scores) noexcept {
    auto values = scores.values();
    // max_element returns the first maximum, which is the lowest index on ties.
    return int(std::max_element(values.begin(), values.end()) - values.begin());
}

SegmentSet::SegmentSet(std::vector<int> ids) : ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    if (std::adjacent_find(ids_.begin(), ids_.end()) != ids_.end()) {
        throw Error(Errc::InvalidArgument, "duplicate segment id in set");
    }
    if (!ids_.empty() && ids_.front() < 0) {
        throw Error(Errc::InvalidArgument, "negative segment id in set");
    }
}

SegmentSet SegmentSet::with(int id) const {
    SegmentSet out;
    out.ids_.reserve(ids_.size() + 1);
    auto pos = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (pos != ids_.end() && *pos == id) {
        throw Error(Errc::InvalidArgument, "segment " + std::to_string(id) + " already in set");
    }
    out.ids_.insert(out.ids_.end(), ids_.begin(), pos);
    out.ids_.push_back(id);
    out.ids_.insert(out.ids_.end(), pos, ids_.end());
    return out;
}

bool SegmentSet::contains(int id) const noexcept {
    return std::binary_search(ids_.begin(), ids_.end(), id);
}

std::string SegmentSet::to_string() const {
    std::ostringstream out;
    out << '{';
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (i) out << ',';
        out << ids_[i];
    }
    out << '}';
    return out.str();
}

std::size_t SegmentSetHash::operator()(const SegmentSet& set) const noexcept {
    std::size_t h = 0xcbf29ce484222325ULL;
    for (int id : set) {
        h ^= std::size_t(id) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
}

void validate(const ReplacementStrategy& strategy) {
    std::visit(overloaded{
                   [](const ConstantColor& c) {
                       for (double v : c.rgb) {
                           if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                               throw Error(Errc::InvalidArgument, "constant color channel outside [0,1]");
                           }
                       }
                   },
                   [](const Blur& b) {
                       if (!(b.sigma > 0.0) || !std::isfinite(b.sigma)) {
                           throw Error(Errc::InvalidArgument, "blur sigma must be positive");
                       }
                   },
                   [](const auto&) {},
               },
               strategy);
}

std::string tag(const ReplacementStrategy& strategy) {
    return std::visit(overloaded{
                          [](const ConstantColor&) { return std::string("color"); },
                          [](const ImageMean&) { return std::string("mean"); },
                          [](const ImageMode&) { return std::string("mode"); },
                          [](const SegmentMean&) { return std::string("segment-mean"); },
                          [](const NeighborMean&) { return std::string("neighbor-mean"); },
                          [](const Blur&) { return std::string("blur"); },
                          [](const RandomPixels&) { return std::string("random"); },
                      },
                      strategy);
}

ReplacementStrategy parse_replacement(const std::string& text) {
    auto colon = text.find(':');
    std::string name = text.substr(0, colon);
    std::string arg = colon == std::string::npos ? std::string() : text.substr(colon + 1);
    auto need_arg = [&] {
        if (arg.empty()) throw Error(Errc::InvalidArgument, "replacement '" + name + "' needs a parameter");
    };
    auto no_arg = [&] {
        if (colon != std::string::npos) {
            throw Error(Errc::InvalidArgument, "replacement '" + name + "' takes no parameter");
        }
    };

    ReplacementStrategy out;
    if (name == "mean") {
        no_arg();
        out = ImageMean{};
    } else if (name == "mode") {
        no_arg();
        out = ImageMode{};
    } else if (name == "segment-mean") {
        no_arg();
        out = SegmentMean{};
    } else if (name == "neighbor-mean") {
        no_arg();
        out = NeighborMean{};
    } else if (name == "blur") {
        need_arg();
        out = Blur{parse_double(arg, "blur sigma")};
    } else if (name == "random") {
        need_arg();
        try {
            if (!std::isdigit(static_cast<unsigned char>(arg.front()))) throw std::invalid_argument(arg);
            std::size_t used = 0;
            auto seed = std::stoull(arg, &used);
            if (used != arg.size()) throw std::invalid_argument(arg);
            out = RandomPixels{seed};
        } catch (const std::exception&) {
            throw Error(Errc::InvalidArgument, "cannot parse random seed from '" + arg + "'");
        }
    } else if (name == "color") {
        need_arg();
        ConstantColor c;
        std::istringstream parts(arg);
        std::string item;
        int n = 0;
        while (std::getline(parts, item, ',')) {
            if (n >= 3) throw Error(Errc::InvalidArgument, "color takes exactly three components");
            c.rgb[std::size_t(n++)] = parse_double(item, "color component");
        }
        if (n != 3) throw Error(Errc::InvalidArgument, "color takes exactly three components");
        out = c;
    } else {
        throw Error(Errc::InvalidArgument, "unknown replacement '" + name + "'");
    }
    validate(out);
    return out;
}

void validate(const SegmentationParams& params) {
    std::visit(overloaded{
                   [](const GridParams& g) {
                       if (g.cell < 1) throw Error(Errc::InvalidArgument, "grid cell must be >= 1");
                   },
                   [](const SlicParams& s) {
                       if (s.n_segments < 1) throw Error(Errc::InvalidArgument, "SLIC n_segments must be >= 1");
                       if (s.iterations < 1) throw Error(Errc::InvalidArgument, "SLIC iterations must be >= 1");
                       if (!(s.compactness > 0.0)) {
                           throw Error(Errc::InvalidArgument, "SLIC compactness must be positive");
                       }
                   },
                   [](const QuickShiftParams& q) {
                       if (!(q.kernel_size > 0.0) || !(q.max_dist > 0.0) || !(q.ratio > 0.0) || q.ratio > 1.0) {
                           throw Error(Errc::InvalidArgument,
                                       "quick shift needs kernel_size > 0, max_dist > 0 and ratio in (0,1]");
                       }
                   },
               },
               params);
}

std::string tag(const SegmentationParams& params) {
    return std::visit(overloaded{
                          [](const GridParams&) { return std::string("grid"); },
                          [](const SlicParams&) { return std::string("slic"); },
                          [](const QuickShiftParams&) { return std::string("quickshift"); },
                      },
                      params);
}

void SearchConfig::validate() const {
    if (!max_iterations && !max_time) {
        throw Error(Errc::InvalidArgument, "search needs a finite iteration or time budget");
    }
    if (max_time && max_time->count() < 0) throw Error(Errc::InvalidArgument, "negative time budget");
    if (refine_time.count() < 0) throw Error(Errc::InvalidArgument, "negative refinement budget");
    if (target && *target < 0) throw Error(Errc::InvalidArgument, "negative target class");
    ec::validate(replacement);
}

}  // namespace ec
