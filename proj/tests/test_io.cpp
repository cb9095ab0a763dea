#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ec/io.hpp"
#include "ec/record.hpp"
#include "fixtures.hpp"
#include "perturbation_oracle.hpp"

using namespace ec;
using nlohmann::json;

namespace {

Errc code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no ec::Error thrown");
    return Errc::Io;
}

Bytes bytes_of(const std::string& s) { return Bytes(s.begin(), s.end()); }

SegmentationParams random_segmentation(std::mt19937_64& rng) {
    switch (rng() % 3) {
        case 0: return GridParams{1 + int(rng() % 40)};
        case 1: return SlicParams{1 + int(rng() % 100), 0.5 + double(rng() % 100) / 8.0, 1 + int(rng() % 20)};
        default: return QuickShiftParams{0.5 + double(rng() % 16) / 4.0, 1.0 + double(rng() % 40) / 3.0, 0.125};
    }
}

ExplanationRecord random_record(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    ExplanationRecord r;
    r.image = "images/img_" + std::to_string(rng() % 1000) + ".png";
    if (rng() % 2) r.target = int(rng() % 10);
    r.predicted_class = int(rng() % 10);
    r.found = rng() % 2;
    r.evaluations = rng() % 100000;
    r.replacement = fixtures::random_strategy(rng);
    if (rng() % 3) r.segmentation = random_segmentation(rng);
    r.seed = rng();
    if (r.found) {
        r.counterfactual_class = int(rng() % 10);
        std::set<int> ids;
        const int n = 1 + int(rng() % 6);
        while (int(ids.size()) < n) ids.insert(int(rng() % 50));
        r.segments.assign(ids.begin(), ids.end());
        r.gain = u(rng);
        r.irreducible_checked = rng() % 2;
    } else {
        r.reason = (rng() % 2) ? "budget" : "frontier_exhausted";
        if (rng() % 4) {
            r.best_partial_segments = std::vector<int>{int(rng() % 5), 5 + int(rng() % 5)};
            r.best_partial_priority = u(rng);
        }
    }
    return r;
}

}  // namespace

TEST_CASE("8-bit PNG round trip is exact for 8-bit values") {
    std::mt19937_64 rng(41);
    for (int ch : {1, 3}) {
        const Image img = fixtures::random_image(rng, 13, 7, ch);
        CHECK(decode_png(encode_png(img)) == img);
        CHECK(decode_image(encode_png(img)) == img);
    }
}

TEST_CASE("16-bit PNG keeps intensities within half a step") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(5 * 4 * 3);
    for (auto& x : v) x = u(rng);
    const Image img(5, 4, 3, v);
    const Image back = decode_png(encode_png(img, 16));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(back.values()[i] - v[i]) <= 0.5 / 65535.0 + 1e-15);
    CHECK(code_of([&] { encode_png(img, 4); }) == Errc::InvalidArgument);
}

TEST_CASE("PNM variants decode") {
    const Image p2 = decode_pnm(bytes_of("P2\n# comment\n2 1\n4\n0 4\n"));
    CHECK(p2 == Image(2, 1, 1, std::vector<double>{0.0, 1.0}));
    const Image p3 = decode_pnm(bytes_of("P3 1 1 255 255 0 51\n"));
    CHECK(p3 == Image(1, 1, 3, std::vector<double>{1.0, 0.0, 0.2}));
    std::string p5 = "P5 2 1 255\n";
    p5 += char(0);
    p5 += char(255);
    CHECK(decode_image(bytes_of(p5)) == Image(2, 1, 1, std::vector<double>{0.0, 1.0}));
    std::string p6 = "P6 1 1 65535\n";
    for (int i = 0; i < 3; ++i) {
        p6 += char(0xff);
        p6 += char(0xff);
    }
    CHECK(decode_pnm(bytes_of(p6)) == Image(1, 1, 3, 1.0));
    CHECK(code_of([] { decode_pnm(bytes_of("P5 2 1 255\n")); }) == Errc::Format);
    CHECK(code_of([] { decode_pnm(bytes_of("P2 1 1 3 7")); }) == Errc::Format);
    CHECK(code_of([] { decode_image(bytes_of("GIF89a")); }) == Errc::Format);
    CHECK(code_of([] { decode_png(bytes_of("\x89PNG\r\n\x1a\nbroken")); }) == Errc::Format);
}

TEST_CASE("files and label rasters round trip") {
    auto dir = fixtures::scratch_dir("io_files");
    std::mt19937_64 rng(43);
    const Image img = fixtures::random_image(rng, 9, 6, 3);
    write_png(dir / "sub" / "img.png", img);
    CHECK(read_image(dir / "sub" / "img.png") == img);
    CHECK(code_of([&] { read_image(dir / "missing.png"); }) == Errc::Io);

    const auto m = fixtures::random_segmap(rng, 9, 6, 300);
    write_label_png(dir / "labels.png", m);
    CHECK(read_label_png(dir / "labels.png") == m);

    const SegmentMap gap(2, 1, {0, 2}, 3);
    write_label_png(dir / "gap.png", gap);
    CHECK(code_of([&] { read_label_png(dir / "gap.png"); }) == Errc::NonContiguousLabels);
    CHECK(code_of([&] { read_label_png(dir / "sub" / "img.png"); }) == Errc::Format);
}

TEST_CASE("renderings") {
    const Image img(2, 2, 1, std::vector<double>{0.1, 0.2, 0.3, 0.4});
    const SegmentMap m(2, 2, {0, 1, 1, 0}, 2);
    const Image mask = render_mask(m, SegmentSet{1});
    CHECK(mask == Image(2, 2, 1, std::vector<double>{0.0, 1.0, 1.0, 0.0}));
    const Image expl = render_explanation(img, m, SegmentSet{0});
    CHECK(expl == Image(2, 2, 1, std::vector<double>{0.1, 0.5, 0.5, 0.4}));
    const Image edges = render_boundaries(img, m);
    CHECK(edges.channels() == 3);
    CHECK(edges(0, 0, 0) == 1.0);
    CHECK(edges(0, 0, 1) == 0.0);
}

TEST_CASE("base64") {
    CHECK(base64_encode(bytes_of("")) == "");
    CHECK(base64_encode(bytes_of("f")) == "Zg==");
    CHECK(base64_encode(bytes_of("foobar")) == "Zm9vYmFy");
    CHECK(base64_decode("Zm9vYg==") == bytes_of("foob"));
    std::mt19937_64 rng(44);
    for (int n = 0; n < 70; ++n) {
        Bytes b(static_cast<std::size_t>(n));
        for (auto& x : b) x = std::uint8_t(rng());
        CHECK(base64_decode(base64_encode(b)) == b);
    }
    CHECK(code_of([] { base64_decode("abc"); }) == Errc::Format);
    CHECK(code_of([] { base64_decode("a!c="); }) == Errc::Format);
}

TEST_CASE("parameter JSON round trips and rejects unknown fields") {
    std::mt19937_64 rng(45);
    for (int i = 0; i < 200; ++i) {
        const auto s = fixtures::random_strategy(rng);
        CHECK(replacement_from_json(to_json(s)) == s);
        const auto p = random_segmentation(rng);
        CHECK(segmentation_from_json(to_json(p)) == p);
    }
    json bad = to_json(ReplacementStrategy{Blur{1.0}});
    bad["radius"] = 3;
    CHECK(code_of([&] { replacement_from_json(bad); }) == Errc::Format);
    json bad_seg = to_json(SegmentationParams{GridParams{4}});
    bad_seg["extra"] = true;
    CHECK(code_of([&] { segmentation_from_json(bad_seg); }) == Errc::Format);
    CHECK(code_of([] { segmentation_from_json(json{{"method", "watershed"}}); }) == Errc::Format);
}

TEST_CASE("linear model JSON round trip") {
    auto dir = fixtures::scratch_dir("io_model");
    std::mt19937_64 rng(46);
    const auto model = fixtures::random_model(rng, 3, 2, 3, 4);
    save_linear_model(dir / "m.json", model);
    CHECK(load_linear_model(dir / "m.json") == model);
    json j = to_json(model);
    j["biases"].push_back(1.0);
    CHECK_THROWS_AS(linear_model_from_json(j), Error);
}

TEST_CASE("label and segment-set files") {
    auto dir = fixtures::scratch_dir("io_lists");
    write_file(dir / "labels.txt", "cat\ndog\n\n");
    CHECK(read_labels_file(dir / "labels.txt") == std::vector<std::string>{"cat", "dog"});
    write_file(dir / "sets.json", "[[3,1],[2],[]]");
    const auto sets = read_segment_sets(dir / "sets.json");
    REQUIRE(sets.size() == 3);
    CHECK(sets[0] == SegmentSet{1, 3});
    CHECK(sets[2].empty());
    write_file(dir / "bad.json", "[[1,1]]");
    CHECK(code_of([&] { read_segment_sets(dir / "bad.json"); }) == Errc::Format);
}

TEST_CASE("explanation records round trip losslessly") {
    std::mt19937_64 rng(47);
    for (int i = 0; i < 500; ++i) {
        const auto r = random_record(rng);
        const std::string text = serialize(r);
        const auto back = parse_record(text);
        CHECK(back == r);
        CHECK(serialize(back) == text);
    }
}

TEST_CASE("records reject unknown, missing and inconsistent fields") {
    std::mt19937_64 rng(48);
    ExplanationRecord r = random_record(rng);
    r.found = true;
    r.reason.reset();
    r.best_partial_segments.reset();
    r.best_partial_priority.reset();
    r.counterfactual_class = 1;
    r.segments = {2, 4};
    json j = to_json(r);
    CHECK_NOTHROW(record_from_json(j));

    json extra = j;
    extra["elapsed_ms"] = 1.0;
    CHECK(code_of([&] { record_from_json(extra); }) == Errc::Format);
    json missing = j;
    missing.erase("evaluations");
    CHECK(code_of([&] { record_from_json(missing); }) == Errc::Format);
    json unsorted = j;
    unsorted["segments"] = {4, 2};
    CHECK(code_of([&] { record_from_json(unsorted); }) == Errc::Format);
    json reason = j;
    reason["reason"] = "budget";
    CHECK(code_of([&] { record_from_json(reason); }) == Errc::Format);
    CHECK(code_of([] { parse_record("{not json"); }) == Errc::Format);
}
