#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "event_log.hpp"

namespace ego {

enum class ModelRole { Forward, GraphDescription, Backward };

const char* model_role_name(ModelRole role);

struct PriceTable {
    double input_per_mtok = 0.0;   // USD per 1e6 prompt tokens
    double output_per_mtok = 0.0;  // USD per 1e6 completion tokens
};

struct ModelSpec {
    ModelRole role = ModelRole::Forward;
    std::string endpoint;       // e.g. http://localhost:8080/v1
    std::string model;          // model name for the wire
    std::string key_alias;      // API key read from EGO_API_KEY_<ALIAS>
    double temperature = 0.0;
    int max_tokens = 1024;
    PriceTable price;
};

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 0;  // 0 = take the model spec default
    // Purpose tag, e.g. "guidance::v3". Metadata only: never sent over the
    // wire and excluded from request hashes; the scripted backend uses it
    // as a human-readable alias key and the event log records it.
    std::string tag;
};

struct ChatResponse {
    std::string content;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    double latency_ms = 0.0;
    int attempts = 1;
};

/// Canonical one-string rendering of (model, decoding params, messages).
/// Request hashes and scripted-table keys are computed over this text.
std::string canonical_request_text(const ModelSpec& spec, const ChatRequest& req);

struct UsageRecord {
    ModelRole role;
    int step = 0;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    std::int64_t cost_nanousd = 0;
};

/// Per-role cumulative token/cost meter. Costs are integer nanodollars,
/// so the ledger total always equals the sum of per-call records exactly.
class UsageLedger {
public:
    void set_step(int step);
    int step() const;
    void record(ModelRole role, long prompt_tokens, long completion_tokens,
                std::int64_t cost_nanousd);

    std::vector<UsageRecord> records() const;
    std::int64_t total_cost_nanousd() const;
    long total_tokens() const;

private:
    mutable std::mutex mu_;
    std::vector<UsageRecord> records_;
    int step_ = 0;
};

std::int64_t call_cost_nanousd(const PriceTable& price, long prompt_tokens,
                               long completion_tokens);

/// One row of the per-step cost table.
struct CostRow {
    int step = 0;
    std::int64_t cost_nanousd = 0;
    long tokens = 0;
    int calls = 0;
    // keyed by model_role_name
    std::map<std::string, std::int64_t> cost_by_role;
    std::map<std::string, int> calls_by_role;
};

struct CostReport {
    std::vector<CostRow> rows;            // steps >= 1 only
    std::int64_t setup_cost_nanousd = 0;  // step 0: initial evaluation
    std::int64_t total_cost_nanousd = 0;
    double mean_step_cost_usd = 0.0;
};

/// Aggregates the ledger into per-step rows for steps 1..steps.
CostReport cost_report(const UsageLedger& ledger, int steps);

std::string format_usd(std::int64_t nanousd);

/// Transport interface. Implementations must be safe for concurrent
/// callers.
class Backend {
public:
    virtual ~Backend() = default;
    virtual ChatResponse complete(const ModelSpec& spec, const ChatRequest& req) = 0;
    /// True when a failed call may be retried (live transports only).
    virtual bool retryable() const { return false; }
    virtual bool offline() const { return true; }
};

/// Table-driven deterministic backend. An entry matches a request by,
/// in order of precedence:
///   hash       - canonical request hash equals key
///   text       - canonical request text equals key
///   prefix     - key is a prefix of the canonical text (longest wins)
///   tag        - request tag equals key, optionally further requiring
///                every `contains` string to appear in the canonical text
///                (entries with more `contains` matches win)
///   tag_prefix - like tag but matches any tag starting with key; catch-all
///                entries for whole call families ("guidance::")
/// No match raises ScriptMiss: a scripted test with a hole is a bug.
class ScriptedBackend : public Backend {
public:
    struct Entry {
        enum class Match { Hash, Text, Prefix, Tag, TagPrefix };
        Match match = Match::Tag;
        std::string key;
        std::vector<std::string> contains;  // Tag entries only
        std::string response;
        long prompt_tokens = 0;
        long completion_tokens = 0;
    };

    ScriptedBackend() = default;

    void add(Entry entry);
    void add_tag(const std::string& tag, const std::string& response,
                 std::vector<std::string> contains = {}, long prompt_tokens = 0,
                 long completion_tokens = 0);

    static ScriptedBackend from_json(const nlohmann::json& doc);
    static ScriptedBackend from_file(const std::string& path);
    nlohmann::json to_json() const;

    ChatResponse complete(const ModelSpec& spec, const ChatRequest& req) override;

private:
    std::vector<Entry> entries_;
};

/// Replays a cassette (JSON-lines of request hash -> response). Misses are
/// ScriptMiss: a replay that diverges from the recording is an error.
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(const std::string& cassette_path);
    ChatResponse complete(const ModelSpec& spec, const ChatRequest& req) override;

private:
    std::map<std::string, nlohmann::json> by_hash_;
};

/// OpenAI-compatible chat-completions client over HTTP(S).
class HttpBackend : public Backend {
public:
    HttpBackend() = default;
    ChatResponse complete(const ModelSpec& spec, const ChatRequest& req) override;
    bool retryable() const override { return true; }
    bool offline() const override { return false; }

    static std::atomic<long>& network_attempts();  // process-wide counter
};

struct RetryPolicy {
    int max_attempts = 5;
    int base_delay_ms = 250;
    int max_delay_ms = 8000;
};

struct RateLimit {
    double requests_per_second = 0.0;  // 0 = unlimited
    int burst = 4;
};

/// Uniform front door: resolves the spec for a role, applies retry and
/// rate limiting, meters usage into the ledger, and records one event per
/// call (into the given recorder when provided, else the event log).
class Gateway {
public:
    Gateway(std::shared_ptr<Backend> backend, std::vector<ModelSpec> specs);

    void set_event_log(EventLog* log) { event_log_ = log; }
    void set_retry_policy(RetryPolicy p) { retry_ = p; }
    void set_rate_limit(RateLimit r);
    void set_cassette_recorder(std::function<void(const std::string&, const ChatResponse&)> fn) {
        cassette_recorder_ = std::move(fn);
    }

    const ModelSpec& spec_for(ModelRole role) const;
    UsageLedger& ledger() { return ledger_; }
    const UsageLedger& ledger() const { return ledger_; }
    bool offline() const { return backend_->offline(); }

    ChatResponse complete(ModelRole role, const ChatRequest& req, CallRecorder* recorder = nullptr);

private:
    struct Bucket {
        double tokens = 0.0;
        std::chrono::steady_clock::time_point last_refill{};
    };
    void throttle(const std::string& endpoint);

    std::shared_ptr<Backend> backend_;
    std::vector<ModelSpec> specs_;
    UsageLedger ledger_;
    EventLog* event_log_ = nullptr;
    RetryPolicy retry_;
    RateLimit rate_;
    std::mutex rate_mu_;
    std::map<std::string, Bucket> buckets_;  // per endpoint
    std::function<void(const std::string&, const ChatResponse&)> cassette_recorder_;
};

}  // namespace ego
