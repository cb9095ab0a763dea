#include "ec/record.hpp"

#include <set>

#include "ec/io.hpp"

namespace ec {

using nlohmann::json;

ExplanationRecord make_record(const SearchOutcome& outcome, const std::string& image_path,
                              const SearchConfig& config, const std::optional<SegmentationParams>& segmentation) {
    ExplanationRecord r;
    r.image = image_path;
    r.target = config.target;
    r.predicted_class = outcome.original_class;
    r.evaluations = outcome.evaluations;
    r.replacement = config.replacement;
    r.segmentation = segmentation;
    r.seed = config.rng_seed;
    if (outcome.found()) {
        const auto& e = *outcome.explanation;
        r.found = true;
        r.counterfactual_class = e.counterfactual_class;
        r.segments = e.segments.ids();
        r.gain = e.gain;
        r.irreducible_checked = e.irreducible_checked;
    } else {
        r.reason = to_string(outcome.reason.value_or(StopReason::FrontierExhausted));
        if (outcome.best_partial) {
            r.best_partial_segments = outcome.best_partial->segments.ids();
            r.best_partial_priority = outcome.best_partial->priority;
        }
    }
    return r;
}

json to_json(const ExplanationRecord& r) {
    json j;
    j["version"] = r.version;
    j["status"] = r.found ? "found" : "not_found";
    j["image"] = r.image;
    j["mode"] = r.target ? "target" : "any";
    j["target"] = r.target ? json(*r.target) : json(nullptr);
    j["predicted_class"] = r.predicted_class;
    j["counterfactual_class"] = r.counterfactual_class ? json(*r.counterfactual_class) : json(nullptr);
    j["segments"] = r.segments;
    j[r.target ? "target_gap_gain" : "score_reduction"] = r.gain;
    j["evaluations"] = r.evaluations;
    j["irreducible_checked"] = r.irreducible_checked;
    j["replacement"] = to_json(r.replacement);
    j["segmentation"] = r.segmentation ? to_json(*r.segmentation) : json(nullptr);
    j["seed"] = r.seed;
    if (!r.found) {
        j["reason"] = r.reason.value_or("frontier_exhausted");
        if (r.best_partial_segments) {
            j["best_partial"] = {{"segments", *r.best_partial_segments},
                                 {"priority", r.best_partial_priority.value_or(0.0)}};
        } else {
            j["best_partial"] = nullptr;
        }
    }
    return j;
}

ExplanationRecord record_from_json(const json& j) {
    if (!j.is_object()) throw Error(Errc::Format, "explanation record must be a JSON object");
    static const std::set<std::string> common = {
        "version", "status", "image", "mode", "target", "predicted_class", "counterfactual_class", "segments",
        "score_reduction", "target_gap_gain", "evaluations", "irreducible_checked", "replacement", "segmentation",
        "seed", "reason", "best_partial"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!common.contains(it.key())) throw Error(Errc::Format, "explanation record: unknown field '" + it.key() + "'");
    }
    try {
        ExplanationRecord r;
        r.version = j.at("version").get<int>();
        if (r.version != 1) throw Error(Errc::Format, "unsupported record version " + std::to_string(r.version));
        const std::string status = j.at("status").get<std::string>();
        if (status != "found" && status != "not_found") throw Error(Errc::Format, "bad status '" + status + "'");
        r.found = status == "found";
        r.image = j.at("image").get<std::string>();
        const std::string mode = j.at("mode").get<std::string>();
        if (mode == "target") {
            r.target = j.at("target").get<int>();
        } else if (mode == "any") {
            if (!j.at("target").is_null()) throw Error(Errc::Format, "any-class record must have a null target");
        } else {
            throw Error(Errc::Format, "bad mode '" + mode + "'");
        }
        const char* gain_key = r.target ? "target_gap_gain" : "score_reduction";
        const char* other_key = r.target ? "score_reduction" : "target_gap_gain";
        if (j.contains(other_key)) throw Error(Errc::Format, std::string("field '") + other_key + "' does not match mode");
        r.gain = j.at(gain_key).get<double>();
        r.predicted_class = j.at("predicted_class").get<int>();
        const auto& cf = j.at("counterfactual_class");
        if (!cf.is_null()) r.counterfactual_class = cf.get<int>();
        r.segments = j.at("segments").get<std::vector<int>>();
        (void)SegmentSet(r.segments);  // validates ids
        if (!std::is_sorted(r.segments.begin(), r.segments.end())) {
            throw Error(Errc::Format, "segments must be ascending");
        }
        r.evaluations = j.at("evaluations").get<std::uint64_t>();
        r.irreducible_checked = j.at("irreducible_checked").get<bool>();
        r.replacement = replacement_from_json(j.at("replacement"));
        if (!j.at("segmentation").is_null()) r.segmentation = segmentation_from_json(j.at("segmentation"));
        r.seed = j.at("seed").get<std::uint64_t>();

        if (r.found) {
            if (j.contains("reason") || j.contains("best_partial")) {
                throw Error(Errc::Format, "found record must not carry reason or best_partial");
            }
            if (r.segments.empty() || !r.counterfactual_class) {
                throw Error(Errc::Format, "found record needs segments and a counterfactual class");
            }
        } else {
            r.reason = j.at("reason").get<std::string>();
            const auto& bp = j.at("best_partial");
            if (!bp.is_null()) {
                if (!bp.is_object() || bp.size() != 2) throw Error(Errc::Format, "best_partial must hold segments and priority");
                r.best_partial_segments = bp.at("segments").get<std::vector<int>>();
                r.best_partial_priority = bp.at("priority").get<double>();
            }
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(Errc::Format, std::string("explanation record: ") + e.what());
    }
}

std::string serialize(const ExplanationRecord& record) { return to_json(record).dump(2) + "\n"; }

ExplanationRecord parse_record(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::Format, "explanation record is not valid JSON");
    return record_from_json(j);
}

}  // namespace ec
