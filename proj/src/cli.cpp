#include "ec/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ec/io.hpp"
#include "ec/metrics.hpp"
#include "ec/record.hpp"
#include "ec/search.hpp"
#include "ec/segmentation.hpp"

namespace ec {

using nlohmann::json;

namespace {

// A failure tagged with the pipeline stage that raised it and the exit code it maps to.
struct StageError {
    std::string stage;
    std::string message;
    int exit_code;
};

template <class F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        const bool classifier = e.is_classifier_error() ||
                                ((stage == "search" || stage == "open classifier") && e.code() == Errc::DimensionMismatch);
        throw StageError{stage, e.what(), classifier ? kExitClassifier : kExitUsage};
    } catch (const fs::filesystem_error& e) {
        throw StageError{stage, e.what(), kExitUsage};
    }
}

struct Options {
    std::string image;
    std::string manifest;
    std::string dataset;
    std::string sets;
    std::string classifier;
    std::string labels;
    std::string segmap;
    std::string segmentation = "quickshift";
    int cell = 16;
    int n_segments = 40;
    double compactness = 10.0;
    int slic_iterations = 10;
    double kernel_size = 4.0;
    double max_dist = 8.0;
    double ratio = 0.5;
    std::string replacement = "mean";
    int target = -1;
    long long max_time_ms = 15000;
    long long max_iters = -1;
    long long refine_ms = -1;
    long long timeout_ms = 30000;
    std::string out = "ec_out";
    int jobs = 1;
    int repeats = 1;
};

void add_segmentation_options(CLI::App* cmd, Options& o) {
    cmd->add_option("--segmentation", o.segmentation, "grid, slic or quickshift")
        ->check(CLI::IsMember({"grid", "slic", "quickshift"}))
        ->capture_default_str();
    cmd->add_option("--cell", o.cell, "grid cell size in pixels")->capture_default_str();
    cmd->add_option("--n-segments", o.n_segments, "SLIC target segment count")->capture_default_str();
    cmd->add_option("--compactness", o.compactness, "SLIC compactness")->capture_default_str();
    cmd->add_option("--slic-iterations", o.slic_iterations, "SLIC k-means iterations")->capture_default_str();
    cmd->add_option("--kernel-size", o.kernel_size, "quick shift density bandwidth")->capture_default_str();
    cmd->add_option("--max-dist", o.max_dist, "quick shift link distance")->capture_default_str();
    cmd->add_option("--ratio", o.ratio, "quick shift color/space ratio")->capture_default_str();
}

void add_search_options(CLI::App* cmd, Options& o) {
    cmd->add_option("--classifier", o.classifier, "builtin:MODEL.json or exec:COMMAND")->required();
    cmd->add_option("--labels", o.labels, "class-name file, one name per line");
    cmd->add_option("--segmap", o.segmap, "precomputed 16-bit label PNG (overrides --segmentation)");
    cmd->add_option("--replacement", o.replacement,
                    "mean|mode|segment-mean|neighbor-mean|blur:SIGMA|random:SEED|color:R,G,B")
        ->capture_default_str();
    cmd->add_option("--max-time", o.max_time_ms, "search budget in ms (0 = unlimited)")->capture_default_str();
    cmd->add_option("--max-iters", o.max_iters, "maximum best-first expansions");
    cmd->add_option("--refine", o.refine_ms, "run the irreducibility check, optionally with a budget in ms")
        ->expected(0, 1)
        ->default_str("15000");
    cmd->add_option("--timeout", o.timeout_ms, "per-response timeout for exec: classifiers in ms")
        ->capture_default_str();
    cmd->add_option("--out", o.out, "output directory")->capture_default_str();
    add_segmentation_options(cmd, o);
}

SegmentationParams segmentation_params(const Options& o) {
    SegmentationParams p;
    if (o.segmentation == "grid") {
        p = GridParams{o.cell};
    } else if (o.segmentation == "slic") {
        p = SlicParams{o.n_segments, o.compactness, o.slic_iterations};
    } else {
        p = QuickShiftParams{o.kernel_size, o.max_dist, o.ratio};
    }
    validate(p);
    return p;
}

SearchConfig search_config(const Options& o, std::optional<int> target) {
    SearchConfig c;
    c.target = target;
    if (o.max_iters >= 0) c.max_iterations = std::uint64_t(o.max_iters);
    if (o.max_time_ms > 0) {
        c.max_time = Millis(o.max_time_ms);
    } else {
        c.max_time.reset();
    }
    if (o.refine_ms >= 0) {
        c.refine_irreducible = true;
        c.refine_time = Millis(o.refine_ms);
    }
    c.replacement = parse_replacement(o.replacement);
    if (const auto* r = std::get_if<RandomPixels>(&c.replacement)) c.rng_seed = r->seed;
    c.validate();
    return c;
}

std::string class_name(int cls, const std::vector<std::string>& names) {
    std::string s = std::to_string(cls);
    if (cls >= 0 && std::size_t(cls) < names.size()) s += " (" + names[std::size_t(cls)] + ")";
    return s;
}

struct Session {
    ClassifierHandle classifier;
    std::vector<std::string> names;
};

Session open_session(const Options& o) {
    auto handle = in_stage("open classifier", [&] { return open_classifier(o.classifier, Millis(o.timeout_ms)); });
    std::vector<std::string> names;
    if (!o.labels.empty()) {
        names = in_stage("read labels", [&] { return read_labels_file(o.labels); });
        if (names.size() != std::size_t(handle.class_count())) {
            throw StageError{"read labels",
                             "labels file has " + std::to_string(names.size()) + " names but the classifier reports " +
                                 std::to_string(handle.class_count()) + " classes",
                             kExitUsage};
        }
    }
    return Session{std::move(handle), std::move(names)};
}

struct ExplainResult {
    ExplanationRecord record;
    SearchOutcome outcome;
};

// Full explain pipeline for one image; writes all artifacts into `out`.
ExplainResult explain_one(const Options& o, const Session& session, const std::string& image_path,
                          std::optional<int> target, const fs::path& out) {
    const Image image = in_stage("load image", [&] { return read_image(image_path); });
    std::optional<SegmentationParams> params;
    const SegmentMap segmap = in_stage("segment", [&] {
        if (!o.segmap.empty()) {
            auto m = read_label_png(o.segmap);
            require_valid_pair(image, m);
            return m;
        }
        params = segmentation_params(o);
        return segment(image, *params);
    });
    const SearchConfig config = in_stage("configure search", [&] { return search_config(o, target); });
    auto outcome = in_stage("search", [&] { return explain(image, session.classifier, segmap, config); });
    if (outcome.explanation) outcome.explanation->segmentation = params;

    auto record = make_record(outcome, image_path, config, params);
    in_stage("write outputs", [&] {
        fs::create_directories(out);
        write_file(out / "explanation.json", serialize(record));
        json stats = {{"elapsed_ms", outcome.elapsed_ms}, {"evaluations", outcome.evaluations}};
        write_file(out / "stats.json", stats.dump(2) + "\n");
        if (outcome.found()) {
            const auto& set = outcome.explanation->segments;
            write_png(out / "mask.png", render_mask(segmap, set));
            write_png(out / "explanation.png", render_explanation(image, segmap, set));
            write_png(out / "counterfactual.png", Perturber(image, segmap, config.replacement).apply(set));
        }
        return 0;
    });
    return ExplainResult{std::move(record), std::move(outcome)};
}

int cmd_explain(const Options& o) {
    const Session session = open_session(o);
    std::optional<int> target;
    if (o.target >= 0) target = o.target;
    auto result = explain_one(o, session, o.image, target, o.out);
    std::cout << "predicted: " << class_name(result.record.predicted_class, session.names) << "\n";
    if (result.outcome.found()) {
        const auto& e = *result.outcome.explanation;
        std::cout << "counterfactual: " << class_name(e.counterfactual_class, session.names) << "\n";
        std::cout << "segments: " << e.segments.to_string() << "\n";
        std::cout << "evaluations: " << e.evaluations << "\n";
        return kExitFound;
    }
    std::cout << "counterfactual: not found (" << result.record.reason.value_or("") << ")\n";
    std::cout << "evaluations: " << result.outcome.evaluations << "\n";
    return kExitNotFound;
}

struct ManifestRow {
    std::string image;
    std::optional<int> target;
};

std::vector<ManifestRow> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw StageError{"read manifest", "cannot open " + path.string(), kExitUsage};
    std::vector<ManifestRow> rows;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        ManifestRow row;
        fields >> row.image;
        std::string target;
        if (fields >> target) {
            try {
                std::size_t used = 0;
                row.target = std::stoi(target, &used);
                if (used != target.size() || *row.target < 0) throw std::invalid_argument(target);
            } catch (const std::exception&) {
                throw StageError{"read manifest", path.string() + ":" + std::to_string(number) + ": bad target '" + target + "'",
                                 kExitUsage};
            }
        }
        std::string extra;
        if (fields >> extra) {
            throw StageError{"read manifest", path.string() + ":" + std::to_string(number) + ": too many fields", kExitUsage};
        }
        fs::path p(row.image);
        if (p.is_relative()) p = path.parent_path() / p;
        row.image = p.lexically_normal().string();
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw StageError{"read manifest", path.string() + " lists no images", kExitUsage};
    return rows;
}

int cmd_batch(const Options& o) {
    const auto rows = read_manifest(o.manifest);
    const Session session = open_session(o);
    // Surface configuration errors once instead of per row.
    if (o.segmap.empty()) in_stage("configure segmentation", [&] { return segmentation_params(o); });
    in_stage("configure search", [&] { return search_config(o, std::nullopt); });

    std::vector<json> results(rows.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            const auto& row = rows[i];
            char prefix[16];
            std::snprintf(prefix, sizeof prefix, "%04zu_", i);
            const fs::path out = fs::path(o.out) / (prefix + fs::path(row.image).stem().string());
            json r = {{"image", row.image},
                      {"target", row.target ? json(*row.target) : json(nullptr)},
                      {"out", out.string()}};
            try {
                auto res = explain_one(o, session, row.image, row.target, out);
                r["status"] = res.outcome.found() ? "found" : "not_found";
                r["predicted_class"] = res.record.predicted_class;
                r["evaluations"] = res.outcome.evaluations;
                if (res.outcome.found()) {
                    r["counterfactual_class"] = res.outcome.explanation->counterfactual_class;
                    r["segments"] = res.record.segments;
                } else {
                    r["reason"] = res.record.reason.value_or("");
                    r["best_partial"] = res.record.best_partial_segments
                                            ? json{{"segments", *res.record.best_partial_segments},
                                                   {"priority", *res.record.best_partial_priority}}
                                            : json(nullptr);
                }
            } catch (const StageError& e) {
                r["status"] = "error";
                r["stage"] = e.stage;
                r["message"] = e.message;
                spdlog::warn("{}: {}: {}", row.image, e.stage, e.message);
            }
            results[i] = std::move(r);
        }
    };
    const int jobs = std::clamp(o.jobs, 1, int(rows.size()));
    std::vector<std::jthread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    pool.clear();

    std::size_t found = 0;
    std::size_t not_found = 0;
    std::size_t errors = 0;
    for (const auto& r : results) {
        const auto status = r["status"].get<std::string>();
        if (status == "found") {
            ++found;
        } else if (status == "not_found") {
            ++not_found;
        } else {
            ++errors;
        }
    }
    json summary = {{"images", rows.size()},
                    {"found", found},
                    {"not_found", not_found},
                    {"errors", errors},
                    {"rows", results}};
    in_stage("write outputs", [&] {
        write_file(fs::path(o.out) / "summary.json", summary.dump(2) + "\n");
        return 0;
    });
    std::cout << "images: " << rows.size() << "  target found: " << found << "  target not found: " << not_found
              << "  errors: " << errors << "\n";
    return kExitFound;
}

int cmd_segment(const Options& o) {
    const Image image = in_stage("load image", [&] { return read_image(o.image); });
    const auto params = in_stage("configure segmentation", [&] { return segmentation_params(o); });
    const SegmentMap segmap = in_stage("segment", [&] { return segment(image, params); });
    in_stage("write outputs", [&] {
        const fs::path out(o.out);
        fs::create_directories(out);
        write_label_png(out / "labels.png", segmap);
        json params_json = to_json(params);
        params_json.erase("method");
        json sidecar = {{"segment_count", segmap.segment_count()}, {"method", tag(params)}, {"params", params_json}};
        write_file(out / "labels.json", sidecar.dump(2) + "\n");
        write_png(out / "overlay.png", render_boundaries(image, segmap));
        return 0;
    });
    std::cout << "segments: " << segmap.segment_count() << "\n";
    return kExitFound;
}

int cmd_bench(const Options& o) {
    if (o.repeats < 1) throw StageError{"parse arguments", "--repeats must be >= 1", kExitUsage};
    std::vector<fs::path> dataset = in_stage("read dataset", [&] {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(o.dataset)) {
            if (!entry.is_regular_file()) continue;
            auto ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
            if (ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        return files;
    });
    if (dataset.empty()) throw StageError{"read dataset", o.dataset + " contains no PNG/PNM images", kExitUsage};
    const Session session = open_session(o);
    const auto params = in_stage("configure segmentation", [&] { return segmentation_params(o); });
    std::optional<int> target;
    if (o.target >= 0) target = o.target;
    const auto config = in_stage("configure search", [&] { return search_config(o, target); });
    const auto report = in_stage("search", [&] {
        return run_bench(dataset, session.classifier, params, config, std::size_t(o.repeats));
    });
    in_stage("write outputs", [&] {
        write_file(fs::path(o.out) / "bench.json", to_json(report).dump(2) + "\n");
        write_file(fs::path(o.out) / "bench.txt", to_text(report));
        return 0;
    });
    std::cout << to_text(report);
    return kExitFound;
}

int cmd_score_sets(const Options& o) {
    const Session session = open_session(o);
    const Image image = in_stage("load image", [&] { return read_image(o.image); });
    const SegmentMap segmap = in_stage("segment", [&] {
        if (!o.segmap.empty()) {
            auto m = read_label_png(o.segmap);
            require_valid_pair(image, m);
            return m;
        }
        return segment(image, segmentation_params(o));
    });
    const auto sets = in_stage("read sets", [&] { return read_segment_sets(o.sets); });
    if (sets.empty()) throw StageError{"read sets", o.sets + " lists no explanations", kExitUsage};
    const auto strategy = in_stage("configure search", [&] { return parse_replacement(o.replacement); });
    std::vector<RemovalCase> cases;
    for (const auto& s : sets) cases.push_back(RemovalCase{image, segmap, s});
    const double rate = in_stage("search", [&] { return counterfactual_rate(cases, session.classifier, strategy); });
    json result = {{"runs", sets.size()}, {"jaccard", jaccard_stability(sets)}, {"counterfactual_pct", 100.0 * rate}};
    std::cout << result.dump(2) << "\n";
    return kExitFound;
}

}  // namespace

void configure_logging() {
    static std::once_flag once;
    std::call_once(once, [] {
        auto logger = spdlog::stderr_color_mt("ec");
        spdlog::set_default_logger(logger);
        spdlog::set_pattern("[%l] %v");
        spdlog::set_level(spdlog::level::warn);
        if (const char* env = std::getenv("EC_LOG")) {
            auto level = spdlog::level::from_str(env);
            spdlog::set_level(level);
        }
    });
}

int run_cli(const std::vector<std::string>& args) {
    configure_logging();
    Options o;
    CLI::App app{"Counterfactual explanations for image classifiers by segment removal", "ec"};
    app.require_subcommand(1);

    auto* explain_cmd = app.add_subcommand("explain", "explain one image");
    explain_cmd->add_option("--image", o.image, "PNG or PPM input")->required();
    explain_cmd->add_option("--target", o.target, "target class (targeted search)");
    add_search_options(explain_cmd, o);

    auto* batch_cmd = app.add_subcommand("batch", "explain every image listed in a manifest");
    batch_cmd->add_option("--manifest", o.manifest, "lines of 'image[,target]'")->required();
    batch_cmd->add_option("--jobs", o.jobs, "parallel rows")->capture_default_str();
    add_search_options(batch_cmd, o);

    auto* segment_cmd = app.add_subcommand("segment", "write a segment map and preview");
    segment_cmd->add_option("--image", o.image, "PNG or PPM input")->required();
    segment_cmd->add_option("--out", o.out, "output directory")->capture_default_str();
    add_segmentation_options(segment_cmd, o);

    auto* bench_cmd = app.add_subcommand("bench", "stability, timing and counterfactual rate over a dataset");
    bench_cmd->add_option("--dataset", o.dataset, "directory of PNG/PPM images")->required();
    bench_cmd->add_option("--repeats", o.repeats, "runs per image")->capture_default_str();
    bench_cmd->add_option("--target", o.target, "target class (targeted search)");
    add_search_options(bench_cmd, o);

    auto* sets_cmd = app.add_subcommand("score-sets", "stability and counterfactual rate of given explanations");
    sets_cmd->add_option("--image", o.image, "PNG or PPM input")->required();
    sets_cmd->add_option("--sets", o.sets, "JSON array of segment id arrays")->required();
    add_search_options(sets_cmd, o);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*explain_cmd) return cmd_explain(o);
        if (*batch_cmd) return cmd_batch(o);
        if (*segment_cmd) return cmd_segment(o);
        if (*bench_cmd) return cmd_bench(o);
        if (*sets_cmd) return cmd_score_sets(o);
    } catch (const StageError& e) {
        std::cerr << "ec: " << e.stage << ": " << e.message << "\n";
        return e.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "ec: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace ec
