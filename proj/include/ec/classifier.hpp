#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ec/image.hpp"
#include "ec/perturbation.hpp"
#include "ec/types.hpp"

namespace ec {

/// Scoring backend. Implementations return raw score rows; validation of
/// class count and finiteness happens in ClassifierHandle.
class Classifier {
public:
    virtual ~Classifier() = default;

    virtual int class_count() const = 0;
    virtual std::vector<std::vector<double>> score(std::span<const Image> images) = 0;
    /// Largest batch the backend wants per call.
    virtual std::size_t max_batch() const { return 64; }
};

/// k per-class weight rasters with the image's shape, plus k biases.
struct LinearModel {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::vector<double>> weights;
    std::vector<double> biases;

    int class_count() const noexcept { return int(biases.size()); }
    /// Throws InvalidArgument on shape mismatches or non-finite values.
    void validate() const;
    bool operator==(const LinearModel&) const = default;
};

/// score_c = sum over pixels and channels of w_c * x + b_c.
class LinearClassifier : public Classifier {
public:
    explicit LinearClassifier(LinearModel model);

    int class_count() const override { return model_.class_count(); }
    std::vector<std::vector<double>> score(std::span<const Image> images) override;
    const LinearModel& model() const noexcept { return model_; }

private:
    LinearModel model_;
};

/// Wraps an arbitrary scoring function; used for mocks and adapters.
class FunctionClassifier : public Classifier {
public:
    using Fn = std::function<std::vector<double>(const Image&)>;
    FunctionClassifier(int class_count, Fn fn);

    int class_count() const override { return class_count_; }
    std::vector<std::vector<double>> score(std::span<const Image> images) override;

private:
    int class_count_;
    Fn fn_;
};

/// Shared handle to a backend with a fixed class count and an evaluation
/// counter. Copies share the backend and the counter.
class ClassifierHandle {
public:
    explicit ClassifierHandle(std::shared_ptr<Classifier> backend);

    int class_count() const noexcept { return class_count_; }

    /// Scores in input order, batched by the backend's max_batch. Does not
    /// touch the evaluation counter. Throws MalformedResponse when a row has
    /// the wrong length or a non-finite entry.
    std::vector<ClassScores> score(std::span<const Image> images) const;
    ClassScores score(const Image& image) const;

    /// Scores each perturbed image and adds one evaluation per set.
    std::vector<ClassScores> score_removals(const Perturber& perturber, std::span<const SegmentSet> sets) const;
    ClassScores score_after_removal(const Perturber& perturber, const SegmentSet& set) const;

    std::uint64_t evaluations() const noexcept { return evaluations_->load(); }
    std::size_t max_batch() const { return backend_->max_batch(); }
    Classifier& backend() const noexcept { return *backend_; }

private:
    std::shared_ptr<Classifier> backend_;
    std::shared_ptr<std::atomic<std::uint64_t>> evaluations_;
    int class_count_;
};

/// score(remove_segments(image, segmap, set, strategy)); counts one evaluation.
ClassScores score_after_removal(const ClassifierHandle& handle, const Image& image, const SegmentMap& segmap,
                                const SegmentSet& set, const ReplacementStrategy& strategy);

/// Builds a handle from "builtin:model.json" or "exec:command line".
ClassifierHandle open_classifier(const std::string& spec, std::chrono::milliseconds timeout = std::chrono::seconds(30));

}  // namespace ec
