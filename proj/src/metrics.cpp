#include "ec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "ec/search.hpp"
#include "ec/segmentation.hpp"

namespace ec {

double jaccard_stability(const std::vector<SegmentSet>& runs) {
    if (runs.empty()) throw Error(Errc::InvalidArgument, "stability needs at least one run");
    std::set<int> all;
    for (const auto& r : runs) all.insert(r.begin(), r.end());
    if (all.empty()) return 1.0;
    std::size_t common = 0;
    for (int id : all) {
        if (std::all_of(runs.begin(), runs.end(), [id](const SegmentSet& r) { return r.contains(id); })) ++common;
    }
    return double(common) / double(all.size());
}

StabilityReport stability_report(const std::vector<SegmentSet>& runs) {
    StabilityReport report;
    report.jaccard = jaccard_stability(runs);
    report.run_count = runs.size();
    for (const auto& r : runs) report.per_run_sizes.push_back(r.size());
    return report;
}

double counterfactual_rate(const std::vector<RemovalCase>& cases, const ClassifierHandle& classifier,
                           const ReplacementStrategy& strategy) {
    if (cases.empty()) return 0.0;
    std::size_t changed = 0;
    for (const auto& c : cases) {
        if (c.segments.empty()) continue;
        const Perturber perturber(c.image, c.segmap, strategy);
        const int before = predicted_class(classifier.score(c.image));
        const int after = predicted_class(classifier.score(perturber.apply(c.segments)));
        if (after != before) ++changed;
    }
    return double(changed) / double(cases.size());
}

namespace {

struct BenchAccumulator {
    BenchReport report;
    std::vector<double> image_times;
    std::vector<double> jaccards;
    std::size_t counterfactual_runs = 0;
    std::size_t total_runs = 0;

    void add(BenchImageResult row, const std::vector<SegmentSet>& runs, std::size_t changed, double time_sum) {
        row.jaccard = jaccard_stability(runs);
        report.not_found_runs += row.runs - row.found_runs;
        counterfactual_runs += changed;
        total_runs += row.runs;
        jaccards.push_back(row.jaccard);
        if (row.found_runs > 0) {
            row.mean_time_s = time_sum / double(row.found_runs);
            image_times.push_back(row.mean_time_s);
        }
        report.evaluation_counts.push_back(row.evaluations);
        report.per_image.push_back(std::move(row));
    }

    void add_failure(const std::string& name, const std::string& error, std::size_t repeats) {
        BenchImageResult row;
        row.name = name;
        row.runs = repeats;
        row.error = error;
        add(std::move(row), std::vector<SegmentSet>(repeats), 0, 0.0);
    }

    void add_item(const BenchItem& item, const ClassifierHandle& classifier, const SearchConfig& config,
                  std::size_t repeats) {
        BenchImageResult row;
        row.name = item.name;
        std::vector<SegmentSet> runs;
        std::vector<RemovalCase> cases;
        double time_sum = 0.0;
        for (std::size_t r = 0; r < repeats; ++r) {
            ++row.runs;
            try {
                auto outcome = explain(item.image, classifier, item.segmap, config);
                if (r == 0) row.evaluations = outcome.evaluations;
                if (outcome.found()) {
                    ++row.found_runs;
                    time_sum += outcome.elapsed_ms / 1000.0;
                    runs.push_back(outcome.explanation->segments);
                } else {
                    runs.emplace_back();
                }
            } catch (const Error& e) {
                if (!row.error) row.error = e.what();
                runs.emplace_back();
            }
            if (!runs.back().empty()) cases.push_back(RemovalCase{item.image, item.segmap, runs.back()});
        }
        std::size_t changed = 0;
        if (!cases.empty()) {
            changed = std::size_t(std::lround(counterfactual_rate(cases, classifier, config.replacement) * double(cases.size())));
        }
        add(std::move(row), runs, changed, time_sum);
    }

    BenchReport finish(const SearchConfig& config, std::size_t images, std::size_t repeats) {
        report.method = config.target ? "SEDC-T" : "SEDC";
        report.images = images;
        report.repeats = repeats;
        if (!jaccards.empty()) {
            report.stability_pct = 100.0 * std::accumulate(jaccards.begin(), jaccards.end(), 0.0) / double(jaccards.size());
        }
        if (!image_times.empty()) {
            const double mean = std::accumulate(image_times.begin(), image_times.end(), 0.0) / double(image_times.size());
            double var = 0.0;
            for (double t : image_times) var += (t - mean) * (t - mean);
            report.time_mean_s = mean;
            report.time_std_s = std::sqrt(var / double(image_times.size()));
        }
        report.counterfactual_pct = total_runs ? 100.0 * double(counterfactual_runs) / double(total_runs) : 0.0;
        return std::move(report);
    }
};

}  // namespace

BenchReport run_bench(const std::vector<BenchItem>& items, const ClassifierHandle& classifier,
                      const SearchConfig& config, std::size_t repeats) {
    if (repeats < 1) throw Error(Errc::InvalidArgument, "repeats must be >= 1");
    BenchAccumulator acc;
    for (const auto& item : items) acc.add_item(item, classifier, config, repeats);
    return acc.finish(config, items.size(), repeats);
}

BenchReport run_bench(const std::vector<fs::path>& dataset, const ClassifierHandle& classifier,
                      const SegmentationParams& params, const SearchConfig& config, std::size_t repeats) {
    if (repeats < 1) throw Error(Errc::InvalidArgument, "repeats must be >= 1");
    BenchAccumulator acc;
    for (const auto& path : dataset) {
        const std::string name = path.filename().string();
        std::optional<BenchItem> item;
        try {
            Image image = read_image(path);
            SegmentMap segmap = segment(image, params);
            item.emplace(BenchItem{name, std::move(image), std::move(segmap)});
        } catch (const Error& e) {
            acc.add_failure(name, e.what(), repeats);
            continue;
        }
        acc.add_item(*item, classifier, config, repeats);
    }
    return acc.finish(config, dataset.size(), repeats);
}

nlohmann::json to_json(const BenchReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.per_image) {
        rows.push_back({{"name", r.name},
                        {"jaccard", r.jaccard},
                        {"runs", r.runs},
                        {"found_runs", r.found_runs},
                        {"mean_time_s", r.mean_time_s},
                        {"evaluations", r.evaluations},
                        {"error", r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr)}});
    }
    return {{"method", report.method},
            {"stability_pct", report.stability_pct},
            {"time_mean_s", report.time_mean_s},
            {"time_std_s", report.time_std_s},
            {"counterfactual_pct", report.counterfactual_pct},
            {"evaluation_counts", report.evaluation_counts},
            {"images", report.images},
            {"repeats", report.repeats},
            {"not_found_runs", report.not_found_runs},
            {"per_image", rows}};
}

std::string to_text(const BenchReport& report) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << std::left << std::setw(24) << "" << report.method << '\n';
    out << std::setw(24) << "stability (%)" << report.stability_pct << '\n';
    out << std::setw(24) << "computation time (s)" << report.time_mean_s << " (" << report.time_std_s << ")\n";
    out << std::setw(24) << "counterfactual (%)" << report.counterfactual_pct << '\n';
    out << std::setw(24) << "images" << report.images << '\n';
    out << std::setw(24) << "repeats" << report.repeats << '\n';
    return out.str();
}

}  // namespace ec
