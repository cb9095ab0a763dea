#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "ec/cli.hpp"
#include "ec/io.hpp"
#include "ec/record.hpp"
#include "fixtures.hpp"

using namespace ec;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Quadrant image where removing the bottom-left 2x2 block flips class 0 to 1.
struct Workspace {
    fs::path dir;
    std::string image;
    std::string model;
};

Workspace workspace(const std::string& name) {
    Workspace w{fixtures::scratch_dir("cli_" + name), "", ""};
    auto p = fixtures::make_additive(fixtures::grid_labels(4, 4, 2), {1.0, 0.5},
                                     {{-0.2, 0.0}, {-0.1, 0.0}, {-0.7, 0.0}, {0.1, 0.0}}, 3);
    write_png(w.dir / "img.png", p.image);
    REQUIRE(read_image(w.dir / "img.png") == p.image);
    save_linear_model(w.dir / "model.json", p.model);
    w.image = (w.dir / "img.png").string();
    w.model = "builtin:" + (w.dir / "model.json").string();
    return w;
}

int run(std::vector<std::string> args) { return run_cli(args); }

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

}  // namespace

TEST_CASE("explain writes the record, stats and images") {
    auto w = workspace("explain");
    const auto out = (w.dir / "out").string();
    REQUIRE(run({"explain", "--image", w.image, "--classifier", w.model, "--segmentation", "grid", "--cell", "2",
                 "--out", out}) == kExitFound);
    for (const char* f : {"explanation.json", "stats.json", "mask.png", "explanation.png", "counterfactual.png"}) {
        CAPTURE(f);
        CHECK(fs::exists(fs::path(out) / f));
    }
    const auto record = parse_record(std::string(std::istreambuf_iterator<char>(std::ifstream(fs::path(out) / "explanation.json").rdbuf()), {}));
    CHECK(record.found);
    CHECK(record.segments == std::vector<int>{2});
    CHECK(record.counterfactual_class == 1);
    CHECK(record.evaluations == 4);
    CHECK(record.segmentation == SegmentationParams{GridParams{2}});
    const auto stats = read_json(fs::path(out) / "stats.json");
    CHECK(stats["evaluations"] == 4);
    CHECK(stats["elapsed_ms"].get<double>() >= 0.0);
    const Image mask = read_image(fs::path(out) / "mask.png");
    CHECK(mask(0, 2) == 1.0);
    CHECK(mask(2, 2) == 0.0);
}

TEST_CASE("explain with refinement and a precomputed segment map") {
    auto w = workspace("refine");
    write_label_png(w.dir / "labels.png", fixtures::grid_labels(4, 4, 2));
    const auto out = (w.dir / "out").string();
    CHECK(run({"explain", "--image", w.image, "--classifier", w.model, "--segmap", (w.dir / "labels.png").string(),
               "--refine", "--out", out}) == kExitFound);
    const auto j = read_json(fs::path(out) / "explanation.json");
    CHECK(j["segments"] == json::array({2}));
    CHECK(j["segmentation"].is_null());
    CHECK(run({"explain", "--image", w.image, "--classifier", w.model, "--segmap", (w.dir / "labels.png").string(),
               "--refine", "250", "--replacement", "blur:1.5", "--out", out}) != kExitUsage);
}

TEST_CASE("explain exit codes") {
    auto w = workspace("codes");
    const auto out = (w.dir / "out").string();
    const std::vector<std::string> base{"explain", "--image", w.image, "--classifier", w.model,
                                        "--segmentation", "grid", "--cell", "2", "--out", out};
    auto with = [&](std::vector<std::string> extra) {
        auto args = base;
        args.insert(args.end(), extra.begin(), extra.end());
        return run(args);
    };
    SUBCASE("unreachable target is not found") {
        // Class 1 needs class 0 below 0.5; an iteration budget of zero stops after the singletons.
        CHECK(with({"--max-iters", "0", "--replacement", "color:1,1,1"}) == kExitNotFound);
        const auto j = read_json(fs::path(out) / "explanation.json");
        CHECK(j["status"] == "not_found");
        CHECK(j["reason"] == "budget");
        CHECK(j.contains("best_partial"));
        CHECK_FALSE(fs::exists(fs::path(out) / "mask.png"));
    }
    SUBCASE("target equal to the prediction is a usage error") { CHECK(with({"--target", "0"}) == kExitUsage); }
    SUBCASE("target out of range is a usage error") { CHECK(with({"--target", "9"}) == kExitUsage); }
    SUBCASE("bad replacement is a usage error") { CHECK(with({"--replacement", "glitter"}) == kExitUsage); }
    SUBCASE("unknown flag is a usage error") { CHECK(with({"--frobnicate"}) == kExitUsage); }
    SUBCASE("labels must match the class count") {
        write_file(w.dir / "labels.txt", "a\nb\nc\n");
        CHECK(with({"--labels", (w.dir / "labels.txt").string()}) == kExitUsage);
        write_file(w.dir / "labels.txt", "cat\ndog\n");
        CHECK(with({"--labels", (w.dir / "labels.txt").string()}) == kExitFound);
    }
    SUBCASE("missing image is a usage error") {
        CHECK(run({"explain", "--image", (w.dir / "none.png").string(), "--classifier", w.model, "--out", out}) ==
              kExitUsage);
    }
    SUBCASE("model with the wrong shape is a classifier error") {
        std::mt19937_64 rng(1);
        save_linear_model(w.dir / "small.json", fixtures::random_model(rng, 2, 2, 1, 2));
        CHECK(run({"explain", "--image", w.image, "--classifier", "builtin:" + (w.dir / "small.json").string(),
                   "--segmentation", "grid", "--cell", "2", "--out", out}) == kExitClassifier);
    }
    SUBCASE("unavailable external classifier is a classifier error") {
        CHECK(run({"explain", "--image", w.image, "--classifier", "exec:/nonexistent/model", "--out", out}) ==
              kExitClassifier);
    }
    SUBCASE("external classifier via the reference server") {
        const std::string exec = std::string("exec:") + EC_LINEAR_SERVER_PATH + " --model " + (w.dir / "model.json").string();
        CHECK(run({"explain", "--image", w.image, "--classifier", exec, "--segmentation", "grid", "--cell", "2",
                   "--out", out}) == kExitFound);
        CHECK(read_json(fs::path(out) / "explanation.json")["segments"] == json::array({2}));
    }
}

TEST_CASE("batch runs a manifest and summarizes") {
    auto w = workspace("batch");
    fs::create_directories(w.dir / "imgs");
    fs::copy_file(w.image, w.dir / "imgs" / "one.png");
    write_file(w.dir / "manifest.csv", "# image, target\nimgs/one.png\nimgs/one.png,1\nimgs/missing.png\n\n");
    const auto out = (w.dir / "out").string();
    CHECK(run({"batch", "--manifest", (w.dir / "manifest.csv").string(), "--classifier", w.model, "--segmentation",
               "grid", "--cell", "2", "--jobs", "2", "--out", out}) == kExitFound);
    const auto summary = read_json(fs::path(out) / "summary.json");
    CHECK(summary["images"] == 3);
    CHECK(summary["found"] == 2);
    CHECK(summary["errors"] == 1);
    CHECK(summary["rows"][1]["target"] == 1);
    CHECK(summary["rows"][2]["stage"] == "load image");
    CHECK(fs::exists(fs::path(summary["rows"][0]["out"].get<std::string>()) / "explanation.json"));

    write_file(w.dir / "empty.csv", "# nothing\n");
    CHECK(run({"batch", "--manifest", (w.dir / "empty.csv").string(), "--classifier", w.model, "--out", out}) ==
          kExitUsage);
    write_file(w.dir / "bad.csv", "imgs/one.png,x\n");
    CHECK(run({"batch", "--manifest", (w.dir / "bad.csv").string(), "--classifier", w.model, "--out", out}) ==
          kExitUsage);
}

TEST_CASE("segment writes labels, sidecar and overlay") {
    auto w = workspace("segment");
    const auto out = (w.dir / "seg").string();
    CHECK(run({"segment", "--image", w.image, "--segmentation", "grid", "--cell", "2", "--out", out}) == kExitFound);
    CHECK(read_label_png(fs::path(out) / "labels.png") == fixtures::grid_labels(4, 4, 2));
    const auto sidecar = read_json(fs::path(out) / "labels.json");
    CHECK(sidecar["segment_count"] == 4);
    CHECK(sidecar["method"] == "grid");
    CHECK(sidecar["params"]["cell"] == 2);
    CHECK(fs::exists(fs::path(out) / "overlay.png"));
    CHECK(run({"segment", "--image", w.image, "--segmentation", "slic", "--n-segments", "3", "--out", out}) ==
          kExitFound);
    CHECK(run({"segment", "--image", w.image, "--segmentation", "watershed", "--out", out}) == kExitUsage);
}

TEST_CASE("bench and score-sets") {
    auto w = workspace("bench");
    fs::create_directories(w.dir / "data");
    fs::copy_file(w.image, w.dir / "data" / "a.png");
    fs::copy_file(w.image, w.dir / "data" / "b.png");
    write_file(w.dir / "data" / "notes.txt", "ignored");
    const auto out = (w.dir / "bench").string();
    CHECK(run({"bench", "--dataset", (w.dir / "data").string(), "--classifier", w.model, "--segmentation", "grid",
               "--cell", "2", "--repeats", "3", "--out", out}) == kExitFound);
    const auto report = read_json(fs::path(out) / "bench.json");
    CHECK(report["images"] == 2);
    CHECK(report["stability_pct"] == 100.0);
    CHECK(report["counterfactual_pct"] == 100.0);
    CHECK(fs::exists(fs::path(out) / "bench.txt"));

    write_file(w.dir / "sets.json", "[[2],[2],[0,2]]");
    CHECK(run({"score-sets", "--image", w.image, "--sets", (w.dir / "sets.json").string(), "--classifier", w.model,
               "--segmentation", "grid", "--cell", "2"}) == kExitFound);
}

TEST_CASE("the installed binary maps outcomes to process exit codes") {
    auto w = workspace("binary");
    const std::string cmd = std::string(EC_CLI_PATH) + " explain --image " + w.image + " --classifier " + w.model +
                            " --segmentation grid --cell 2 --out " + (w.dir / "o").string() + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 0);
    status = std::system((std::string(EC_CLI_PATH) + " explain --image " + w.image + " --classifier " + w.model +
                          " --target 0 > /dev/null 2>&1")
                             .c_str());
    CHECK(WEXITSTATUS(status) == 1);
    status = std::system((std::string(EC_CLI_PATH) + " > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(status) == 1);
}

TEST_CASE("a constant classifier yields NotFound with a best partial") {
    auto w = workspace("constant");
    save_linear_model(w.dir / "constant.json",
                      LinearModel{4, 4, 1, {std::vector<double>(16, 0.0), std::vector<double>(16, 0.0)}, {1.0, 0.0}});
    const auto out = w.dir / "out";
    CHECK(run({"explain", "--image", w.image, "--classifier", "builtin:" + (w.dir / "constant.json").string(),
               "--segmentation", "grid", "--cell", "2", "--max-time", "1000", "--out", out.string()}) == kExitNotFound);
    const auto j = read_json(out / "explanation.json");
    CHECK(j["status"] == "not_found");
    CHECK(j["reason"] == "frontier_exhausted");
    CHECK(j["best_partial"]["segments"].size() >= 1);
    CHECK(j["evaluations"] == 15);
}

TEST_CASE("mask pixels are exactly the union of the listed segments") {
    auto w = workspace("mask");
    const auto out = w.dir / "out";
    REQUIRE(run({"explain", "--image", w.image, "--classifier", w.model, "--segmentation", "grid", "--cell", "2",
                 "--replacement", "color:0,0,0", "--out", out.string()}) == kExitFound);
    const auto j = read_json(out / "explanation.json");
    const auto segments = j["segments"].get<std::vector<int>>();
    const auto mask_bytes = read_file(out / "mask.png");
    const Image mask = decode_png(mask_bytes);
    const auto grid = fixtures::grid_labels(4, 4, 2);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            const bool listed = std::find(segments.begin(), segments.end(), grid(x, y)) != segments.end();
            CHECK(mask(x, y) == (listed ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("batch summary separates found and not-found rows") {
    auto w = workspace("batch_mixed");
    // Three classes: class 1 is reachable by removing segment 2, class 2 never.
    auto p = fixtures::make_additive(fixtures::grid_labels(4, 4, 2), {1.0, 0.5, -5.0},
                                     {{-0.2, 0.0, 0.0}, {-0.1, 0.0, 0.0}, {-0.7, 0.0, 0.0}, {0.1, 0.0, 0.0}}, 3);
    write_png(w.dir / "img.png", p.image);
    save_linear_model(w.dir / "model3.json", p.model);
    write_file(w.dir / "manifest.csv", "img.png,1\nimg.png\nimg.png,1\n");
    const auto out = w.dir / "out";
    const std::vector<std::string> common{"--classifier", "builtin:" + (w.dir / "model3.json").string(),
                                          "--segmentation", "grid", "--cell", "2", "--out", out.string()};
    auto args = std::vector<std::string>{"batch", "--manifest", (w.dir / "manifest.csv").string()};
    args.insert(args.end(), common.begin(), common.end());
    CHECK(run(args) == kExitFound);
    auto summary = read_json(out / "summary.json");
    CHECK(summary["images"] == 3);
    CHECK(summary["found"] == 3);
    CHECK(summary["not_found"] == 0);

    write_file(w.dir / "manifest.csv", "img.png,1\nimg.png,2\nimg.png\n");
    CHECK(run(args) == kExitFound);
    summary = read_json(out / "summary.json");
    CHECK(summary["found"] == 2);
    CHECK(summary["not_found"] == 1);
    CHECK(summary["rows"][1]["status"] == "not_found");
    CHECK(summary["rows"][1]["best_partial"].is_object());
}

TEST_CASE("segment edge cases") {
    auto w = workspace("segment_edges");
    const auto out = w.dir / "seg";
    CHECK(run({"segment", "--image", w.image, "--segmentation", "grid", "--cell", "10", "--out", out.string()}) ==
          kExitFound);
    CHECK(read_json(out / "labels.json")["segment_count"] == 1);
    CHECK(run({"segment", "--image", w.image, "--segmentation", "slic", "--n-segments", "1", "--out", out.string()}) ==
          kExitFound);
    CHECK(read_json(out / "labels.json")["segment_count"] == 1);
}

TEST_CASE("bench records unreadable images as not-found rows") {
    auto w = workspace("bench_bad");
    fs::create_directories(w.dir / "data");
    fs::copy_file(w.image, w.dir / "data" / "a.png");
    write_file(w.dir / "data" / "b.png", "not an image");
    const auto out = w.dir / "bench";
    CHECK(run({"bench", "--dataset", (w.dir / "data").string(), "--classifier", w.model, "--segmentation", "grid",
               "--cell", "2", "--repeats", "1", "--out", out.string()}) == kExitFound);
    const auto report = read_json(out / "bench.json");
    CHECK(report["images"] == 2);
    CHECK(report["not_found_runs"] == 1);
    CHECK(report["counterfactual_pct"] == 50.0);
    CHECK(report["per_image"][1]["error"].is_string());
    CHECK(report["per_image"][0]["error"].is_null());
}
