#include "gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "error.hpp"
#include "util.hpp"

namespace ego {

const char* model_role_name(ModelRole role) {
    switch (role) {
        case ModelRole::Forward: return "forward";
        case ModelRole::GraphDescription: return "graph_description";
        case ModelRole::Backward: return "backward";
    }
    return "unknown";
}

std::string canonical_request_text(const ModelSpec& spec, const ChatRequest& req) {
    std::string out;
    out += "model: " + spec.model + "\n";
    out += "temperature: " + std::to_string(req.temperature) + "\n";
    int max_tokens = req.max_tokens > 0 ? req.max_tokens : spec.max_tokens;
    out += "max_tokens: " + std::to_string(max_tokens) + "\n";
    for (const auto& m : req.messages) {
        out += "--- " + m.role + " ---\n";
        out += normalize_newlines(m.content) + "\n";
    }
    return out;
}

void UsageLedger::set_step(int step) {
    std::lock_guard<std::mutex> lock(mu_);
    step_ = step;
}

int UsageLedger::step() const {
    std::lock_guard<std::mutex> lock(mu_);
    return step_;
}

void UsageLedger::record(ModelRole role, long prompt_tokens, long completion_tokens,
                         std::int64_t cost_nanousd) {
    std::lock_guard<std::mutex> lock(mu_);
    records_.push_back(UsageRecord{role, step_, prompt_tokens, completion_tokens, cost_nanousd});
}

std::vector<UsageRecord> UsageLedger::records() const {
    std::lock_guard<std::mutex> lock(mu_);
    return records_;
}

std::int64_t UsageLedger::total_cost_nanousd() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::int64_t total = 0;
    for (const auto& r : records_) total += r.cost_nanousd;
    return total;
}

long UsageLedger::total_tokens() const {
    std::lock_guard<std::mutex> lock(mu_);
    long total = 0;
    for (const auto& r : records_) total += r.prompt_tokens + r.completion_tokens;
    return total;
}

std::int64_t call_cost_nanousd(const PriceTable& price, long prompt_tokens,
                               long completion_tokens) {
    // USD/1e6 tokens => nanoUSD/token is price * 1e3.
    double nanos = static_cast<double>(prompt_tokens) * price.input_per_mtok * 1e3 +
                   static_cast<double>(completion_tokens) * price.output_per_mtok * 1e3;
    return static_cast<std::int64_t>(std::llround(nanos));
}

CostReport cost_report(const UsageLedger& ledger, int steps) {
    if (steps < 1) throw Error(ErrorCode::InvalidArgument, "cost_report needs steps >= 1");
    CostReport report;
    report.rows.resize(static_cast<std::size_t>(steps));
    for (int s = 1; s <= steps; ++s) report.rows[static_cast<std::size_t>(s - 1)].step = s;

    for (const auto& r : ledger.records()) {
        report.total_cost_nanousd += r.cost_nanousd;
        if (r.step < 1) {
            report.setup_cost_nanousd += r.cost_nanousd;
            continue;
        }
        if (r.step > steps) continue;
        auto& row = report.rows[static_cast<std::size_t>(r.step - 1)];
        row.cost_nanousd += r.cost_nanousd;
        row.tokens += r.prompt_tokens + r.completion_tokens;
        row.calls += 1;
        row.cost_by_role[model_role_name(r.role)] += r.cost_nanousd;
        row.calls_by_role[model_role_name(r.role)] += 1;
    }
    std::int64_t step_total = 0;
    for (const auto& row : report.rows) step_total += row.cost_nanousd;
    report.mean_step_cost_usd = static_cast<double>(step_total) / 1e9 / steps;
    return report;
}

std::string format_usd(std::int64_t nanousd) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "$%.6f", static_cast<double>(nanousd) / 1e9);
    return buf;
}

// --- ScriptedBackend ---------------------------------------------------

void ScriptedBackend::add(Entry entry) { entries_.push_back(std::move(entry)); }

void ScriptedBackend::add_tag(const std::string& tag, const std::string& response,
                              std::vector<std::string> contains, long prompt_tokens,
                              long completion_tokens) {
    Entry e;
    e.match = Entry::Match::Tag;
    e.key = tag;
    e.contains = std::move(contains);
    e.response = response;
    e.prompt_tokens = prompt_tokens;
    e.completion_tokens = completion_tokens;
    entries_.push_back(std::move(e));
}

ScriptedBackend ScriptedBackend::from_json(const nlohmann::json& doc) {
    ScriptedBackend b;
    for (const auto& item : doc.at("entries")) {
        Entry e;
        std::string match = item.value("match", "tag");
        if (match == "hash") e.match = Entry::Match::Hash;
        else if (match == "text") e.match = Entry::Match::Text;
        else if (match == "prefix") e.match = Entry::Match::Prefix;
        else if (match == "tag") e.match = Entry::Match::Tag;
        else if (match == "tag_prefix") e.match = Entry::Match::TagPrefix;
        else throw Error(ErrorCode::Config, "unknown script match kind: " + match);
        e.key = item.at("key").get<std::string>();
        if (item.contains("contains")) {
            for (const auto& c : item["contains"]) e.contains.push_back(c.get<std::string>());
        }
        e.response = item.at("response").get<std::string>();
        e.prompt_tokens = item.value("prompt_tokens", 0L);
        e.completion_tokens = item.value("completion_tokens", 0L);
        b.entries_.push_back(std::move(e));
    }
    return b;
}

ScriptedBackend ScriptedBackend::from_file(const std::string& path) {
    return from_json(nlohmann::json::parse(read_file(path)));
}

nlohmann::json ScriptedBackend::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : entries_) {
        nlohmann::json item;
        switch (e.match) {
            case Entry::Match::Hash: item["match"] = "hash"; break;
            case Entry::Match::Text: item["match"] = "text"; break;
            case Entry::Match::Prefix: item["match"] = "prefix"; break;
            case Entry::Match::Tag: item["match"] = "tag"; break;
            case Entry::Match::TagPrefix: item["match"] = "tag_prefix"; break;
        }
        item["key"] = e.key;
        if (!e.contains.empty()) item["contains"] = e.contains;
        item["response"] = e.response;
        if (e.prompt_tokens) item["prompt_tokens"] = e.prompt_tokens;
        if (e.completion_tokens) item["completion_tokens"] = e.completion_tokens;
        entries.push_back(std::move(item));
    }
    return nlohmann::json{{"version", 1}, {"entries", entries}};
}

ChatResponse ScriptedBackend::complete(const ModelSpec& spec, const ChatRequest& req) {
    const std::string text = canonical_request_text(spec, req);
    const std::string hash = content_hash(text);

    const Entry* best = nullptr;
    int best_rank = -1;
    std::size_t best_strength = 0;
    for (const auto& e : entries_) {
        int rank = -1;
        std::size_t strength = 0;
        switch (e.match) {
            case Entry::Match::Hash:
                if (e.key == hash) rank = 4;
                break;
            case Entry::Match::Text:
                if (e.key == text) rank = 3;
                break;
            case Entry::Match::Prefix:
                if (starts_with(text, e.key)) {
                    rank = 2;
                    strength = e.key.size();
                }
                break;
            case Entry::Match::Tag:
            case Entry::Match::TagPrefix: {
                const bool tag_ok = e.match == Entry::Match::Tag
                                        ? e.key == req.tag
                                        : starts_with(req.tag, e.key);
                if (!tag_ok) break;
                bool all = true;
                for (const auto& c : e.contains) {
                    if (text.find(c) == std::string::npos) {
                        all = false;
                        break;
                    }
                }
                if (all) {
                    rank = e.match == Entry::Match::Tag ? 1 : 0;
                    strength = e.contains.size() * 4096 + e.key.size();
                }
                break;
            }
        }
        if (rank > best_rank || (rank == best_rank && strength > best_strength)) {
            if (rank >= 0) {
                best = &e;
                best_rank = rank;
                best_strength = strength;
            }
        }
    }
    if (!best) {
        throw Error(ErrorCode::ScriptMiss,
                    "scripted backend has no entry for tag '" + req.tag + "' (request hash " +
                        hash + ")");
    }
    ChatResponse resp;
    resp.content = best->response;
    resp.prompt_tokens = best->prompt_tokens;
    resp.completion_tokens = best->completion_tokens;
    return resp;
}

// --- ReplayBackend ------------------------------------------------------

ReplayBackend::ReplayBackend(const std::string& cassette_path) {
    std::ifstream in(cassette_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open cassette: " + cassette_path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto rec = nlohmann::json::parse(line);
        by_hash_[rec.at("key").get<std::string>()] = rec;
    }
}

ChatResponse ReplayBackend::complete(const ModelSpec& spec, const ChatRequest& req) {
    const std::string hash = content_hash(canonical_request_text(spec, req));
    auto it = by_hash_.find(hash);
    if (it == by_hash_.end()) {
        throw Error(ErrorCode::ScriptMiss,
                    "cassette has no recording for request hash " + hash + " (tag '" + req.tag +
                        "')");
    }
    ChatResponse resp;
    resp.content = it->second.at("content").get<std::string>();
    resp.prompt_tokens = it->second.value("prompt_tokens", 0L);
    resp.completion_tokens = it->second.value("completion_tokens", 0L);
    return resp;
}

// --- HttpBackend ----------------------------------------------------------

std::atomic<long>& HttpBackend::network_attempts() {
    static std::atomic<long> counter{0};
    return counter;
}

namespace {

// Splits "http://host:port/base" into client target and path prefix.
struct EndpointParts {
    std::string origin;  // scheme://host:port
    std::string base;    // path prefix, no trailing slash
};

EndpointParts split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::Config, "endpoint must include scheme: " + endpoint);
    }
    auto path_start = endpoint.find('/', scheme_end + 3);
    EndpointParts parts;
    if (path_start == std::string::npos) {
        parts.origin = endpoint;
    } else {
        parts.origin = endpoint.substr(0, path_start);
        parts.base = endpoint.substr(path_start);
        while (!parts.base.empty() && parts.base.back() == '/') parts.base.pop_back();
    }
    return parts;
}

}  // namespace

ChatResponse HttpBackend::complete(const ModelSpec& spec, const ChatRequest& req) {
    network_attempts().fetch_add(1);
    auto parts = split_endpoint(spec.endpoint);

    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : req.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    nlohmann::json body{
        {"model", spec.model},
        {"messages", messages},
        {"temperature", req.temperature},
        {"max_tokens", req.max_tokens > 0 ? req.max_tokens : spec.max_tokens},
    };

    httplib::Headers headers;
    if (!spec.key_alias.empty()) {
        std::string var = "EGO_API_KEY_" + spec.key_alias;
        if (const char* key = std::getenv(var.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }

    auto start = std::chrono::steady_clock::now();
    httplib::Client client(parts.origin);
    client.set_read_timeout(120, 0);
    client.set_connection_timeout(10, 0);
    auto res = client.Post(parts.base + "/chat/completions", headers, body.dump(),
                           "application/json");
    auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             start);
    if (!res) {
        throw Error(ErrorCode::Backend,
                    "transport error calling " + spec.endpoint + ": " +
                        httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500 || res->status == 408) {
        throw Error(ErrorCode::Backend,
                    "transient HTTP " + std::to_string(res->status) + " from " + spec.endpoint);
    }
    if (res->status != 200) {
        throw Error(ErrorCode::Backend, "HTTP " + std::to_string(res->status) + " from " +
                                            spec.endpoint + ": " + res->body);
    }
    nlohmann::json doc = nlohmann::json::parse(res->body);
    const auto& choices = doc.at("choices");
    if (!choices.is_array() || choices.empty()) {
        throw Error(ErrorCode::Backend, "response has no choices");
    }
    ChatResponse out;
    out.content = choices[0].at("message").at("content").get<std::string>();
    if (doc.contains("usage")) {
        out.prompt_tokens = doc["usage"].value("prompt_tokens", 0L);
        out.completion_tokens = doc["usage"].value("completion_tokens", 0L);
    }
    out.latency_ms = elapsed.count();
    return out;
}

// --- Gateway ----------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Backend> backend, std::vector<ModelSpec> specs)
    : backend_(std::move(backend)), specs_(std::move(specs)) {
    // Graph description defaults to the forward spec.
    bool has_graph = false;
    const ModelSpec* forward = nullptr;
    for (const auto& s : specs_) {
        if (s.role == ModelRole::GraphDescription) has_graph = true;
        if (s.role == ModelRole::Forward) forward = &s;
    }
    if (!has_graph && forward) {
        ModelSpec graph = *forward;
        graph.role = ModelRole::GraphDescription;
        specs_.push_back(graph);
    }
}

const ModelSpec& Gateway::spec_for(ModelRole role) const {
    for (const auto& s : specs_) {
        if (s.role == role) return s;
    }
    throw Error(ErrorCode::Config,
                std::string("no model spec configured for role ") + model_role_name(role));
}

void Gateway::set_rate_limit(RateLimit r) {
    std::lock_guard<std::mutex> lock(rate_mu_);
    rate_ = r;
    buckets_.clear();
}

void Gateway::throttle(const std::string& endpoint) {
    if (rate_.requests_per_second <= 0.0) return;
    while (true) {
        {
            std::lock_guard<std::mutex> lock(rate_mu_);
            auto now = std::chrono::steady_clock::now();
            auto [it, fresh] = buckets_.try_emplace(endpoint);
            Bucket& bucket = it->second;
            if (fresh) {
                bucket.tokens = rate_.burst;
                bucket.last_refill = now;
            }
            double elapsed = std::chrono::duration<double>(now - bucket.last_refill).count();
            bucket.tokens = std::min<double>(rate_.burst,
                                             bucket.tokens + elapsed * rate_.requests_per_second);
            bucket.last_refill = now;
            if (bucket.tokens >= 1.0) {
                bucket.tokens -= 1.0;
                return;
            }
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
}

ChatResponse Gateway::complete(ModelRole role, const ChatRequest& req, CallRecorder* recorder) {
    const ModelSpec& spec = spec_for(role);
    const std::string canonical = canonical_request_text(spec, req);
    const std::string request_hash = content_hash(canonical);

    ChatResponse resp;
    int attempts = 0;
    while (true) {
        ++attempts;
        try {
            throttle(spec.endpoint);
            resp = backend_->complete(spec, req);
            break;
        } catch (const Error& e) {
            bool transient = e.code() == ErrorCode::Backend && backend_->retryable();
            if (!transient || attempts >= retry_.max_attempts) throw;
            int delay = retry_.base_delay_ms;
            for (int i = 1; i < attempts; ++i) delay = std::min(delay * 2, retry_.max_delay_ms);
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
    }
    resp.attempts = attempts;

    std::int64_t cost = call_cost_nanousd(spec.price, resp.prompt_tokens, resp.completion_tokens);
    ledger_.record(role, resp.prompt_tokens, resp.completion_tokens, cost);

    if (cassette_recorder_) cassette_recorder_(request_hash, resp);

    nlohmann::json record{
        {"type", "model_call"},
        {"step", ledger_.step()},
        {"role", model_role_name(role)},
        {"tag", req.tag},
        {"request_hash", request_hash},
        {"response_hash", content_hash(resp.content)},
        {"request", canonical},
        {"response", resp.content},
        {"prompt_tokens", resp.prompt_tokens},
        {"completion_tokens", resp.completion_tokens},
        {"attempts", resp.attempts},
        {"cost_nanousd", cost},
    };
    if (recorder) {
        recorder->add(std::move(record));
    } else if (event_log_) {
        event_log_->append(record);
    }
    return resp;
}

}  // namespace ego
