// Reference classifier process for the wire protocol: scores images with a
// linear model read from JSON. Misbehaviour switches exist so the client's
// error handling can be exercised end to end.

#include <poll.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ec/classifier.hpp"
#include "ec/io.hpp"

using nlohmann::json;

namespace {

struct Faults {
    std::size_t reorder = 1;
    std::optional<std::uint64_t> drop_id;
    std::optional<std::uint64_t> error_id;
    std::optional<std::uint64_t> nan_id;
    std::optional<std::uint64_t> wrong_k_id;
};

class LineReader {
public:
    // Returns false on EOF. Blocks until a whole line is available.
    bool next(std::string& line) {
        for (;;) {
            auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return true;
            }
            char chunk[65536];
            ssize_t n = ::read(0, chunk, sizeof chunk);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) return false;
            buffer_.append(chunk, std::size_t(n));
        }
    }

    // True if a complete line can be returned without blocking.
    bool ready() {
        if (buffer_.find('\n') != std::string::npos) return true;
        pollfd p{0, POLLIN, 0};
        return ::poll(&p, 1, 0) > 0;
    }

private:
    std::string buffer_;
};

void emit(const json& msg) { std::cout << msg.dump() << "\n"; }

json respond(const json& request, ec::LinearClassifier& model, const Faults& faults) {
    const auto id = request.at("id").get<std::uint64_t>();
    try {
        if (faults.error_id == id) throw std::runtime_error("injected failure");
        const auto png = ec::base64_decode(request.at("png_b64").get<std::string>());
        const ec::Image image = ec::decode_png(png);
        if (image.width() != request.at("width").get<int>() || image.height() != request.at("height").get<int>() ||
            image.channels() != request.at("channels").get<int>()) {
            throw std::runtime_error("declared shape does not match the PNG");
        }
        std::vector<ec::Image> batch{image};
        auto scores = model.score(batch).front();
        json values = scores;
        if (faults.nan_id == id) values[0] = nullptr;
        if (faults.wrong_k_id == id) values.push_back(0.0);
        return json{{"type", "scores"}, {"id", id}, {"scores", values}};
    } catch (const std::exception& e) {
        return json{{"type", "error"}, {"id", id}, {"message", e.what()}};
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear classifier process speaking the ec wire protocol", "ec-linear-server"};
    std::string model_path;
    Faults faults;
    app.add_option("--model", model_path, "linear model JSON")->required();
    app.add_option("--reorder", faults.reorder, "answer requests in reverse order in groups of N");
    app.add_option("--drop-id", faults.drop_id, "never answer this request id");
    app.add_option("--error-id", faults.error_id, "answer this request id with an error message");
    app.add_option("--nan-id", faults.nan_id, "send a null score for this request id");
    app.add_option("--wrong-k-id", faults.wrong_k_id, "send k+1 scores for this request id");
    CLI11_PARSE(app, argc, argv);
    faults.reorder = std::max<std::size_t>(faults.reorder, 1);

    std::optional<ec::LinearClassifier> model;
    try {
        model.emplace(ec::load_linear_model(model_path));
    } catch (const std::exception& e) {
        std::cerr << "ec-linear-server: " << e.what() << "\n";
        return 1;
    }

    LineReader reader;
    std::string line;
    std::vector<json> pending;
    auto flush = [&] {
        for (auto it = pending.rbegin(); it != pending.rend(); ++it) emit(*it);
        pending.clear();
        std::cout.flush();
    };
    while (reader.next(line)) {
        if (line.empty()) continue;
        json msg = json::parse(line, nullptr, false);
        if (msg.is_discarded() || !msg.is_object()) {
            std::cerr << "ec-linear-server: ignoring unparseable line\n";
            continue;
        }
        const std::string type = msg.value("type", "");
        if (type == "hello") {
            emit(json{{"type", "ready"}, {"classes", model->class_count()}});
            std::cout.flush();
            continue;
        }
        if (type != "score" || !msg.contains("id") || !msg["id"].is_number_unsigned()) {
            std::cerr << "ec-linear-server: ignoring message of type '" << type << "'\n";
            continue;
        }
        if (faults.drop_id == msg["id"].get<std::uint64_t>()) continue;
        pending.push_back(respond(msg, *model, faults));
        if (pending.size() >= faults.reorder || !reader.ready()) flush();
    }
    flush();
    return 0;
}
