#include "ec/search.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include <spdlog/spdlog.h>

namespace ec {

using Clock = std::chrono::steady_clock;

bool Frontier::push(SegmentSet set, double priority) {
    if (!visited_.insert(set).second) return false;
    queue_.push(Entry{priority, next_sequence_++, std::move(set)});
    return true;
}

bool Frontier::mark_visited(const SegmentSet& set) { return visited_.insert(set).second; }

std::pair<SegmentSet, double> Frontier::pop_best() {
    if (queue_.empty()) throw Error(Errc::EmptyFrontier, "no combination left to expand");
    Entry top = queue_.top();
    queue_.pop();
    return {std::move(top.set), top.priority};
}

const char* to_string(StopReason reason) noexcept {
    switch (reason) {
        case StopReason::Budget: return "budget";
        case StopReason::FrontierExhausted: return "frontier_exhausted";
    }
    return "unknown";
}

std::uint64_t irreducibility_candidate_count(unsigned n) noexcept {
    if (n < 2 || n > 63) return n > 63 ? UINT64_MAX : 0;
    return (std::uint64_t{1} << n) - n - 2;
}

namespace {

// Class condition, best-first priority and selection key for one search mode.
struct Objective {
    int original;
    std::optional<int> target;
    ClassScores base;

    bool hit(const ClassScores& s) const {
        const int p = predicted_class(s);
        return target ? p == *target : p != original;
    }
    double priority(const ClassScores& s) const {
        return target ? s[std::size_t(*target)] - s[std::size_t(original)]
                      : base[std::size_t(original)] - s[std::size_t(original)];
    }
    double selection(const ClassScores& s) const {
        return target ? s[std::size_t(*target)] - base[std::size_t(*target)]
                      : base[std::size_t(original)] - s[std::size_t(original)];
    }
    double gain(const ClassScores& s) const {
        if (!target) return selection(s);
        const auto t = std::size_t(*target);
        const auto c = std::size_t(original);
        return (s[t] - s[c]) - (base[t] - base[c]);
    }
};

double millis_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

Objective make_objective(const ClassifierHandle& classifier, const Image& image, std::optional<int> target) {
    auto base = classifier.score(image);
    const int original = predicted_class(base);
    if (target) {
        if (*target < 0 || *target >= classifier.class_count()) {
            throw Error(Errc::InvalidArgument, "target class " + std::to_string(*target) + " outside [0, " +
                                                   std::to_string(classifier.class_count()) + ")");
        }
        if (*target == original) {
            throw Error(Errc::TargetEqualsPredicted,
                        "image is already classified as target class " + std::to_string(*target), *target);
        }
    }
    return Objective{original, target, std::move(base)};
}

RefinementResult refine(const SegmentSet& explanation, const Perturber& perturber, const ClassifierHandle& classifier,
                        const Objective& objective, Millis budget) {
    RefinementResult result{explanation, true, 0};
    const auto& ids = explanation.ids();
    const std::size_t n = ids.size();
    if (n < 3) return result;

    const auto deadline = Clock::now() + budget;
    const std::size_t batch = std::max<std::size_t>(1, classifier.max_batch());
    std::vector<SegmentSet> pending;
    std::optional<std::pair<SegmentSet, double>> best;

    auto flush = [&]() -> bool {
        if (pending.empty()) return true;
        if (Clock::now() > deadline) return false;
        auto scores = classifier.score_removals(perturber, pending);
        result.candidates += pending.size();
        for (std::size_t i = 0; i < pending.size(); ++i) {
            if (!objective.hit(scores[i])) continue;
            const double key = objective.selection(scores[i]);
            if (!best || key > best->second) best.emplace(pending[i], key);
        }
        pending.clear();
        return true;
    };

    for (std::size_t k = 2; k < n; ++k) {
        std::vector<std::size_t> idx(k);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (;;) {
            std::vector<int> subset(k);
            for (std::size_t i = 0; i < k; ++i) subset[i] = ids[idx[i]];
            pending.emplace_back(std::move(subset));
            if (pending.size() == batch && !flush()) {
                result.completed = false;
                return result;
            }
            // Next combination in lexicographic order.
            std::size_t i = k;
            while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
            if (i == 0) break;
            ++idx[i - 1];
            for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
        }
        if (!flush()) {
            result.completed = false;
            return result;
        }
        if (best) {
            result.segments = best->first;
            return result;
        }
    }
    return result;
}

SearchOutcome run_search(const Image& image, const ClassifierHandle& classifier, const SegmentMap& segmap,
                         const SearchConfig& config, SearchObserver* observer) {
    config.validate();
    const auto start = Clock::now();
    require_valid_pair(image, segmap);

    const Objective objective = make_objective(classifier, image, config.target);
    const Perturber perturber(image, segmap, config.replacement);
    const std::optional<Clock::time_point> deadline =
        config.max_time ? std::optional(start + *config.max_time) : std::nullopt;
    const std::size_t batch = std::max<std::size_t>(1, classifier.max_batch());

    struct Hit {
        SegmentSet set;
        double key;
    };
    Frontier frontier;
    std::vector<Hit> hits;
    std::optional<PartialResult> best_partial;
    std::uint64_t evaluations = 0;

    // Scores candidates in generation order. Returns false once the time budget is spent.
    auto evaluate = [&](const std::vector<SegmentSet>& candidates) -> bool {
        for (std::size_t first = 0; first < candidates.size(); first += batch) {
            if (deadline && Clock::now() > *deadline) return false;
            const std::size_t count = std::min(batch, candidates.size() - first);
            std::span<const SegmentSet> chunk(candidates.data() + first, count);
            auto scores = classifier.score_removals(perturber, chunk);
            evaluations += count;
            for (std::size_t i = 0; i < count; ++i) {
                const auto& set = chunk[i];
                if (observer) observer->on_scored(set, scores[i]);
                if (objective.hit(scores[i])) {
                    frontier.mark_visited(set);
                    hits.push_back(Hit{set, objective.selection(scores[i])});
                    continue;
                }
                const double priority = objective.priority(scores[i]);
                frontier.push(set, priority);
                if (!best_partial || priority > best_partial->priority) {
                    best_partial = PartialResult{set, priority};
                    if (observer) observer->on_best_partial(*best_partial);
                }
            }
        }
        return true;
    };

    const int l = segmap.segment_count();
    std::optional<StopReason> stop;
    {
        std::vector<SegmentSet> singletons;
        singletons.reserve(std::size_t(l));
        for (int s = 0; s < l; ++s) singletons.push_back(SegmentSet{s});
        if (!evaluate(singletons)) stop = StopReason::Budget;
    }

    std::uint64_t iterations = 0;
    while (!stop && hits.empty()) {
        if (frontier.empty()) {
            stop = StopReason::FrontierExhausted;
            break;
        }
        if (config.max_iterations && iterations >= *config.max_iterations) {
            stop = StopReason::Budget;
            break;
        }
        auto [best, priority] = frontier.pop_best();
        ++iterations;
        std::vector<SegmentSet> children;
        for (int s = 0; s < l; ++s) {
            if (best.contains(s)) continue;
            auto child = best.with(s);
            if (!frontier.visited(child)) children.push_back(std::move(child));
        }
        spdlog::trace("expanding {} (priority {}) into {} candidates", best.to_string(), priority, children.size());
        if (!evaluate(children)) stop = StopReason::Budget;
    }

    SearchOutcome outcome;
    outcome.original_class = objective.original;
    if (hits.empty()) {
        outcome.reason = stop.value_or(StopReason::FrontierExhausted);
        outcome.best_partial = best_partial;
        outcome.evaluations = evaluations;
        outcome.elapsed_ms = millis_since(start);
        spdlog::debug("search stopped without explanation ({}) after {} evaluations", to_string(*outcome.reason),
                      evaluations);
        return outcome;
    }

    // First maximum wins, so ties keep generation order.
    const Hit* chosen = &hits.front();
    for (const auto& h : hits) {
        if (h.key > chosen->key) chosen = &h;
    }

    SegmentSet segments = chosen->set;
    bool irreducible_checked = false;
    if (config.refine_irreducible) {
        auto refined = refine(segments, perturber, classifier, objective, config.refine_time);
        evaluations += refined.candidates;
        segments = std::move(refined.segments);
        irreducible_checked = refined.completed;
    }

    // Independent re-check of the class condition on the returned set.
    const auto final_scores = classifier.score(perturber.apply(segments));
    if (!objective.hit(final_scores)) {
        throw Error(Errc::MalformedResponse,
                    "re-scoring " + segments.to_string() + " did not reproduce the class change; classifier is not deterministic");
    }

    Explanation e;
    e.segments = std::move(segments);
    e.original_class = objective.original;
    e.counterfactual_class = predicted_class(final_scores);
    e.target = config.target;
    e.gain = objective.gain(final_scores);
    e.evaluations = evaluations;
    e.irreducible_checked = irreducible_checked;
    e.replacement = config.replacement;
    e.elapsed_ms = millis_since(start);

    outcome.evaluations = evaluations;
    outcome.elapsed_ms = e.elapsed_ms;
    outcome.explanation = std::move(e);
    return outcome;
}

}  // namespace

SearchOutcome sedc(const Image& image, const ClassifierHandle& classifier, const SegmentMap& segmap,
                   const SearchConfig& config, SearchObserver* observer) {
    SearchConfig any = config;
    any.target.reset();
    return run_search(image, classifier, segmap, any, observer);
}

SearchOutcome sedc_t(const Image& image, const ClassifierHandle& classifier, const SegmentMap& segmap, int target,
                     const SearchConfig& config, SearchObserver* observer) {
    SearchConfig targeted = config;
    targeted.target = target;
    return run_search(image, classifier, segmap, targeted, observer);
}

SearchOutcome explain(const Image& image, const ClassifierHandle& classifier, const SegmentMap& segmap,
                      const SearchConfig& config, SearchObserver* observer) {
    return run_search(image, classifier, segmap, config, observer);
}

RefinementResult irreducibility_search(const SegmentSet& explanation, const Image& image,
                                       const ClassifierHandle& classifier, const SegmentMap& segmap,
                                       const SearchConfig& config) {
    require_valid_pair(image, segmap);
    const Objective objective = make_objective(classifier, image, config.target);
    const Perturber perturber(image, segmap, config.replacement);
    return refine(explanation, perturber, classifier, objective, config.refine_time);
}

}  // namespace ec
