#include "ec/classifier.hpp"

#include <cmath>

#include "ec/external.hpp"
#include "ec/io.hpp"

namespace ec {

void LinearModel::validate() const {
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
        throw Error(Errc::InvalidArgument, "linear model needs positive dimensions and 1 or 3 channels");
    }
    if (biases.size() < 2) throw Error(Errc::InvalidArgument, "linear model needs at least two classes");
    if (weights.size() != biases.size()) {
        throw Error(Errc::InvalidArgument, "linear model has " + std::to_string(weights.size()) +
                                               " weight rasters for " + std::to_string(biases.size()) + " biases");
    }
    const std::size_t raster = std::size_t(width) * std::size_t(height) * std::size_t(channels);
    for (const auto& w : weights) {
        if (w.size() != raster) throw Error(Errc::InvalidArgument, "linear model weight raster has the wrong size");
        for (double v : w) {
            if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, "linear model weight is not finite");
        }
    }
    for (double b : biases) {
        if (!std::isfinite(b)) throw Error(Errc::InvalidArgument, "linear model bias is not finite");
    }
}

LinearClassifier::LinearClassifier(LinearModel model) : model_(std::move(model)) { model_.validate(); }

std::vector<std::vector<double>> LinearClassifier::score(std::span<const Image> images) {
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    for (const auto& image : images) {
        if (image.width() != model_.width || image.height() != model_.height || image.channels() != model_.channels) {
            throw Error(Errc::DimensionMismatch, "linear model expects " + std::to_string(model_.width) + "x" +
                                                     std::to_string(model_.height) + "x" +
                                                     std::to_string(model_.channels) + " images");
        }
        const auto x = image.values();
        std::vector<double> row(model_.biases);
        for (std::size_t c = 0; c < row.size(); ++c) {
            const auto& w = model_.weights[c];
            double acc = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * x[i];
            row[c] += acc;
        }
        out.push_back(std::move(row));
    }
    return out;
}

FunctionClassifier::FunctionClassifier(int class_count, Fn fn) : class_count_(class_count), fn_(std::move(fn)) {
    if (class_count < 2) throw Error(Errc::InvalidArgument, "classifier needs at least two classes");
}

std::vector<std::vector<double>> FunctionClassifier::score(std::span<const Image> images) {
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    for (const auto& image : images) out.push_back(fn_(image));
    return out;
}

ClassifierHandle::ClassifierHandle(std::shared_ptr<Classifier> backend)
    : backend_(std::move(backend)), evaluations_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
    if (!backend_) throw Error(Errc::InvalidArgument, "null classifier backend");
    class_count_ = backend_->class_count();
    if (class_count_ < 2) throw Error(Errc::MalformedResponse, "classifier reports fewer than two classes");
}

std::vector<ClassScores> ClassifierHandle::score(std::span<const Image> images) const {
    std::vector<ClassScores> out;
    out.reserve(images.size());
    const std::size_t batch = std::max<std::size_t>(1, backend_->max_batch());
    for (std::size_t start = 0; start < images.size(); start += batch) {
        auto chunk = images.subspan(start, std::min(batch, images.size() - start));
        auto rows = backend_->score(chunk);
        if (rows.size() != chunk.size()) {
            throw Error(Errc::MalformedResponse, "backend returned " + std::to_string(rows.size()) +
                                                     " score rows for " + std::to_string(chunk.size()) + " images");
        }
        for (auto& row : rows) {
            if (row.size() != std::size_t(class_count_)) {
                throw Error(Errc::MalformedResponse, "score row has " + std::to_string(row.size()) +
                                                         " entries, expected " + std::to_string(class_count_));
            }
            for (double v : row) {
                if (!std::isfinite(v)) throw Error(Errc::MalformedResponse, "score row contains a non-finite value");
            }
            out.emplace_back(std::move(row));
        }
    }
    return out;
}

ClassScores ClassifierHandle::score(const Image& image) const {
    return score(std::span<const Image>(&image, 1)).front();
}

std::vector<ClassScores> ClassifierHandle::score_removals(const Perturber& perturber,
                                                          std::span<const SegmentSet> sets) const {
    std::vector<Image> images;
    images.reserve(sets.size());
    for (const auto& set : sets) images.push_back(perturber.apply(set));
    auto out = score(images);
    evaluations_->fetch_add(sets.size());
    return out;
}

ClassScores ClassifierHandle::score_after_removal(const Perturber& perturber, const SegmentSet& set) const {
    return score_removals(perturber, std::span<const SegmentSet>(&set, 1)).front();
}

ClassScores score_after_removal(const ClassifierHandle& handle, const Image& image, const SegmentMap& segmap,
                                const SegmentSet& set, const ReplacementStrategy& strategy) {
    return handle.score_after_removal(Perturber(image, segmap, strategy), set);
}

ClassifierHandle open_classifier(const std::string& spec, std::chrono::milliseconds timeout) {
    if (spec.rfind("builtin:", 0) == 0) {
        return ClassifierHandle(std::make_shared<LinearClassifier>(load_linear_model(spec.substr(8))));
    }
    if (spec.rfind("exec:", 0) == 0) {
        return ClassifierHandle(std::make_shared<ExternalClassifier>(spec.substr(5), timeout));
    }
    throw Error(Errc::InvalidArgument, "classifier spec must be builtin:PATH or exec:COMMAND, got '" + spec + "'");
}

}  // namespace ec
