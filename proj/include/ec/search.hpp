#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ec/classifier.hpp"
#include "ec/image.hpp"
#include "ec/types.hpp"

namespace ec {

/// Best-first frontier of segment combinations.
///
/// pop_best returns the highest-priority entry, earliest insertion first on
/// ties. Every combination ever offered stays in the visited set, so a popped
/// (pruned) combination is never inserted again.
class Frontier {
public:
    /// Records `set` as visited and queues it. Returns false, without
    /// queueing, if the set was visited before.
    bool push(SegmentSet set, double priority);
    /// Records `set` as visited without queueing it. Returns false if it
    /// was already visited.
    bool mark_visited(const SegmentSet& set);
    bool visited(const SegmentSet& set) const { return visited_.contains(set); }

    /// Throws EmptyFrontier when there is nothing to pop.
    std::pair<SegmentSet, double> pop_best();

    bool empty() const noexcept { return queue_.empty(); }
    std::size_t size() const noexcept { return queue_.size(); }
    std::size_t visited_count() const noexcept { return visited_.size(); }

private:
    struct Entry {
        double priority;
        std::uint64_t sequence;
        SegmentSet set;
    };
    struct Lower {
        bool operator()(const Entry& a, const Entry& b) const noexcept {
            if (a.priority != b.priority) return a.priority < b.priority;
            return a.sequence > b.sequence;
        }
    };

    std::priority_queue<Entry, std::vector<Entry>, Lower> queue_;
    std::unordered_set<SegmentSet, SegmentSetHash> visited_;
    std::uint64_t next_sequence_ = 0;
};

enum class StopReason { Budget, FrontierExhausted };

const char* to_string(StopReason reason) noexcept;

/// Highest-priority combination reached by a search that did not succeed.
struct PartialResult {
    SegmentSet segments;
    double priority = 0.0;
};

struct SearchOutcome {
    std::optional<Explanation> explanation;
    /// Set when no explanation was found.
    std::optional<StopReason> reason;
    std::optional<PartialResult> best_partial;
    int original_class = 0;
    std::uint64_t evaluations = 0;
    double elapsed_ms = 0.0;

    bool found() const noexcept { return explanation.has_value(); }
};

/// Hooks for instrumentation. Called on the searching thread.
class SearchObserver {
public:
    virtual ~SearchObserver() = default;
    virtual void on_scored(const SegmentSet& /*set*/, const ClassScores& /*scores*/) {}
    virtual void on_best_partial(const PartialResult& /*partial*/) {}
};

/// Any-class counterfactual search. Scores every singleton, then repeatedly
/// expands (and prunes) the combination with the largest predicted-class
/// score reduction until an expansion loop yields at least one class change.
/// Among the changes found, the one with the largest reduction is returned,
/// optionally shrunk by irreducibility_search.
SearchOutcome sedc(const Image& image, const ClassifierHandle& classifier, const SegmentMap& segmap,
                   const SearchConfig& config, SearchObserver* observer = nullptr);

/// Targeted search: a combination succeeds when the target becomes the
/// predicted class, priorities are p_target - p_original_class, and the
/// result is the success with the largest increase of the target score.
/// Throws TargetEqualsPredicted if the image is already classified as target.
SearchOutcome sedc_t(const Image& image, const ClassifierHandle& classifier, const SegmentMap& segmap, int target,
                     const SearchConfig& config, SearchObserver* observer = nullptr);

/// Dispatches on config.target.
SearchOutcome explain(const Image& image, const ClassifierHandle& classifier, const SegmentMap& segmap,
                      const SearchConfig& config, SearchObserver* observer = nullptr);

struct RefinementResult {
    SegmentSet segments;
    /// True when the enumeration finished within config.refine_time.
    bool completed = false;
    /// Candidate subsets scored.
    std::uint64_t candidates = 0;
};

/// Number of subsets checked for an explanation of size n: 2^n - n - 2
/// (every subset except the empty set, the full set and the singletons).
std::uint64_t irreducibility_candidate_count(unsigned n) noexcept;

/// Tests subsets of `explanation` of size 2..n-1 in order of size, then
/// lexicographically, against the mode's class condition. Returns the
/// smallest passing subset (largest score reduction, or target-score gain,
/// among equals), or the input when none passes or the budget runs out.
RefinementResult irreducibility_search(const SegmentSet& explanation, const Image& image,
                                       const ClassifierHandle& classifier, const SegmentMap& segmap,
                                       const SearchConfig& config);

}  // namespace ec
