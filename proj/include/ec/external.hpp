#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>

#include "ec/classifier.hpp"

namespace ec {

/// Scores images through a child process speaking newline-delimited JSON on
/// its standard streams:
///
///   -> {"type":"hello","protocol":1}
///   <- {"type":"ready","classes":k}
///   -> {"type":"score","id":u64,"width":w,"height":h,"channels":c,"png_b64":"..."}
///   <- {"type":"scores","id":u64,"scores":[...]}   or   {"type":"error","id":u64,"message":"..."}
///
/// Images travel as 16-bit PNG. Ids increase strictly and are never reused.
/// Responses may arrive in any order within a batch; a response that does
/// not arrive within `timeout` raises Timeout. Responses for ids of an
/// abandoned batch are discarded. Wire access is serialized internally.
class ExternalClassifier : public Classifier {
public:
    explicit ExternalClassifier(const std::string& command,
                                std::chrono::milliseconds timeout = std::chrono::seconds(30));
    ~ExternalClassifier() override;

    ExternalClassifier(const ExternalClassifier&) = delete;
    ExternalClassifier& operator=(const ExternalClassifier&) = delete;

    int class_count() const override { return class_count_; }
    std::vector<std::vector<double>> score(std::span<const Image> images) override;
    std::size_t max_batch() const override { return 64; }

private:
    std::vector<std::vector<double>> score_batch(std::span<const Image> images);
    void write_all(const std::string& data);
    std::string read_line();
    void shutdown() noexcept;

    std::string command_;
    std::chrono::milliseconds timeout_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string read_buffer_;
    std::uint64_t next_id_ = 1;
    int class_count_ = 0;
    std::mutex mutex_;
};

}  // namespace ec
