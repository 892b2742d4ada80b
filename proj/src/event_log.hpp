#pragma once

#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

namespace ego {

/// Append-only JSON-lines log. Records never carry wall-clock fields, so
/// two runs with identical inputs produce byte-identical files.
class EventLog {
public:
    EventLog() = default;  // in-memory only
    explicit EventLog(const std::string& path);

    void append(const nlohmann::json& record);
    void append_all(const std::vector<nlohmann::json>& records);

    const std::vector<nlohmann::json>& records() const { return records_; }
    const std::string& path() const { return path_; }

    /// Parses a JSON-lines file back into records.
    static std::vector<nlohmann::json> read_file(const std::string& path);

private:
    std::string path_;
    std::ofstream out_;
    std::vector<nlohmann::json> records_;
    std::mutex mu_;
};

/// Per-call record buffer used during concurrent evaluation; flushed to
/// the EventLog in deterministic sample order after the fan-out joins.
class CallRecorder {
public:
    void add(nlohmann::json record) { records_.push_back(std::move(record)); }
    const std::vector<nlohmann::json>& records() const { return records_; }
    std::vector<nlohmann::json> take() { return std::move(records_); }

private:
    std::vector<nlohmann::json> records_;
};

}  // namespace ego
