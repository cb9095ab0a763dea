#include "ec/external.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <map>

#include <spdlog/spdlog.h>

#include "ec/io.hpp"

namespace ec {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

int remaining_ms(Clock::time_point deadline) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left < 0 ? 0 : int(std::min<long long>(left, 1 << 30));
}

}  // namespace

ExternalClassifier::ExternalClassifier(const std::string& command, std::chrono::milliseconds timeout)
    : command_(command), timeout_(timeout) {
    // A dead child must surface as BackendUnavailable, not kill the engine.
    ::signal(SIGPIPE, SIG_IGN);

    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw Error(Errc::BackendUnavailable, "pipe: " + std::string(std::strerror(errno)));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw Error(Errc::BackendUnavailable, "pipe: " + std::string(std::strerror(errno)));
    }
    pid_ = ::fork();
    if (pid_ < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        throw Error(Errc::BackendUnavailable, "fork: " + std::string(std::strerror(errno)));
    }
    if (pid_ == 0) {
        // Own process group, so shutdown also reaches anything the shell spawned.
        ::setpgid(0, 0);
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::setpgid(pid_, pid_);  // also in the parent, so a kill right after fork reaches the group
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    ::fcntl(to_child_, F_SETFL, ::fcntl(to_child_, F_GETFL) | O_NONBLOCK);
    ::fcntl(from_child_, F_SETFL, ::fcntl(from_child_, F_GETFL) | O_NONBLOCK);

    try {
        write_all(json{{"type", "hello"}, {"protocol", 1}}.dump() + "\n");
        const std::string line = read_line();
        json reply = json::parse(line, nullptr, false);
        if (reply.is_discarded() || !reply.is_object() || reply.value("type", "") != "ready" ||
            !reply.contains("classes") || !reply["classes"].is_number_integer()) {
            throw Error(Errc::MalformedResponse, "expected ready message, got: " + line);
        }
        class_count_ = reply["classes"].get<int>();
        if (class_count_ < 2) throw Error(Errc::MalformedResponse, "backend reports fewer than two classes");
    } catch (...) {
        shutdown();
        throw;
    }
    spdlog::debug("external classifier '{}' ready with {} classes", command_, class_count_);
}

ExternalClassifier::~ExternalClassifier() { shutdown(); }

void ExternalClassifier::shutdown() noexcept {
    if (to_child_ >= 0) ::close(to_child_);
    to_child_ = -1;
    if (from_child_ >= 0) ::close(from_child_);
    from_child_ = -1;
    if (pid_ > 0) {
        int status = 0;
        // Closing stdin asks the child to exit; give it a moment before killing.
        for (int i = 0; i < 50; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                ::kill(-pid_, SIGKILL);
                pid_ = -1;
                return;
            }
            ::usleep(2000);
        }
        ::kill(-pid_, SIGKILL);
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

void ExternalClassifier::write_all(const std::string& data) {
    if (to_child_ < 0) throw Error(Errc::BackendUnavailable, "connection to classifier process is closed");
    std::size_t written = 0;
    auto deadline = Clock::now() + timeout_;
    while (written < data.size()) {
        // Drain the child's output while writing so neither side blocks on a full pipe.
        pollfd fds[2] = {{to_child_, POLLOUT, 0}, {from_child_, POLLIN, 0}};
        int rc = ::poll(fds, 2, remaining_ms(deadline));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw Error(Errc::BackendUnavailable, "poll: " + std::string(std::strerror(errno)));
        }
        if (rc == 0) throw Error(Errc::Timeout, "classifier process stopped reading requests");
        if (fds[1].revents & POLLIN) {
            char buf[65536];
            ssize_t n = ::read(from_child_, buf, sizeof buf);
            if (n > 0) read_buffer_.append(buf, std::size_t(n));
        }
        if (fds[0].revents & (POLLERR | POLLHUP)) {
            throw Error(Errc::BackendUnavailable, "classifier process closed its input");
        }
        if (fds[0].revents & POLLOUT) {
            ssize_t n = ::write(to_child_, data.data() + written, data.size() - written);
            if (n < 0) {
                if (errno == EAGAIN || errno == EINTR) continue;
                throw Error(Errc::BackendUnavailable, "write to classifier process: " + std::string(std::strerror(errno)));
            }
            written += std::size_t(n);
            deadline = Clock::now() + timeout_;
        }
    }
}

std::string ExternalClassifier::read_line() {
    auto deadline = Clock::now() + timeout_;
    for (;;) {
        auto nl = read_buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = read_buffer_.substr(0, nl);
            read_buffer_.erase(0, nl + 1);
            return line;
        }
        if (from_child_ < 0) throw Error(Errc::BackendUnavailable, "connection to classifier process is closed");
        pollfd fd{from_child_, POLLIN, 0};
        int rc = ::poll(&fd, 1, remaining_ms(deadline));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw Error(Errc::BackendUnavailable, "poll: " + std::string(std::strerror(errno)));
        }
        if (rc == 0) throw Error(Errc::Timeout, "no response from classifier process within " + std::to_string(timeout_.count()) + " ms");
        char buf[65536];
        ssize_t n = ::read(from_child_, buf, sizeof buf);
        if (n == 0) throw Error(Errc::BackendUnavailable, "classifier process closed its output");
        if (n < 0) {
            if (errno == EAGAIN || errno == EINTR) continue;
            throw Error(Errc::BackendUnavailable, "read from classifier process: " + std::string(std::strerror(errno)));
        }
        read_buffer_.append(buf, std::size_t(n));
    }
}

std::vector<std::vector<double>> ExternalClassifier::score(std::span<const Image> images) {
    std::lock_guard lock(mutex_);
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += max_batch()) {
        auto rows = score_batch(images.subspan(start, std::min(max_batch(), images.size() - start)));
        for (auto& r : rows) out.push_back(std::move(r));
    }
    return out;
}

std::vector<std::vector<double>> ExternalClassifier::score_batch(std::span<const Image> images) {
    const std::uint64_t first_id = next_id_;
    std::string requests;
    for (const auto& image : images) {
        json req = {{"type", "score"},
                    {"id", next_id_++},
                    {"width", image.width()},
                    {"height", image.height()},
                    {"channels", image.channels()},
                    {"png_b64", base64_encode(encode_png(image, 16))}};
        requests += req.dump();
        requests += '\n';
    }
    write_all(requests);

    std::map<std::uint64_t, std::vector<double>> received;
    while (received.size() < images.size()) {
        const std::string line = read_line();
        json msg = json::parse(line, nullptr, false);
        if (msg.is_discarded() || !msg.is_object() || !msg.contains("id") || !msg["id"].is_number_unsigned()) {
            throw Error(Errc::MalformedResponse, "unparseable response: " + line.substr(0, 200));
        }
        const auto id = msg["id"].get<std::uint64_t>();
        if (id < first_id) {
            spdlog::debug("discarding stale response for id {}", id);
            continue;
        }
        if (id >= next_id_) throw Error(Errc::MalformedResponse, "response for unknown id " + std::to_string(id));
        const std::string type = msg.value("type", "");
        if (type == "error") {
            throw Error(Errc::RemoteError, "classifier process failed on request " + std::to_string(id) + ": " +
                                               msg.value("message", std::string("(no message)")));
        }
        if (type != "scores" || !msg.contains("scores") || !msg["scores"].is_array()) {
            throw Error(Errc::MalformedResponse, "unexpected response: " + line.substr(0, 200));
        }
        std::vector<double> row;
        for (const auto& v : msg["scores"]) {
            if (!v.is_number()) throw Error(Errc::MalformedResponse, "non-numeric score in response " + std::to_string(id));
            row.push_back(v.get<double>());
        }
        if (row.size() != std::size_t(class_count_)) {
            throw Error(Errc::MalformedResponse, "response " + std::to_string(id) + " has " + std::to_string(row.size()) +
                                                     " scores, expected " + std::to_string(class_count_));
        }
        if (!received.emplace(id, std::move(row)).second) {
            throw Error(Errc::MalformedResponse, "duplicate response for id " + std::to_string(id));
        }
    }

    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    for (auto& [id, row] : received) out.push_back(std::move(row));
    return out;
}

}  // namespace ec
