#include "event_log.hpp"

#include <filesystem>

#include "error.hpp"

namespace ego {

EventLog::EventLog(const std::string& path) : path_(path) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorCode::Io, "cannot open event log: " + path);
}

void EventLog::append(const nlohmann::json& record) {
    std::lock_guard<std::mutex> lock(mu_);
    records_.push_back(record);
    if (out_.is_open()) {
        out_ << record.dump() << "\n";
        out_.flush();
    }
}

void EventLog::append_all(const std::vector<nlohmann::json>& records) {
    for (const auto& r : records) append(r);
}

std::vector<nlohmann::json> EventLog::read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open event log: " + path);
    std::vector<nlohmann::json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(nlohmann::json::parse(line));
    }
    return out;
}

}  // namespace ego
