#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "event_log.hpp"
#include "gateway.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "scg.hpp"
#include "textgrad.hpp"

namespace ego {

enum class OptimizerMode { Full, SingleModel, FixedGraphSide, FixedSysPrompt, NoIterative, NoOpt };

OptimizerMode parse_mode(const std::string& name);
const char* mode_name(OptimizerMode mode);

struct OptimizerConfig {
    int steps = 8;           // T
    int batch_size = 3;
    std::uint64_t seed = 0;
    OptimizerMode mode = OptimizerMode::Full;
    int repeats = 3;
    int eval_concurrency = 4;
    double max_length_factor = 4.0;
    bool accumulate_across_steps = false;  // off by default: fresh batches per step

    nlohmann::json to_json() const;
    static OptimizerConfig from_json(const nlohmann::json& doc);
};

/// Everything one run needs: task definition, rows, and the id splits.
struct Task {
    TaskSpec spec;
    RecordTable table;
    Split split;
};

struct Checkpoint {
    int version = 1;
    std::string task;
    OptimizerConfig config;
    std::uint64_t seed = 0;  // seed of the repeat that produced this state
    int step = 0;
    std::string stage;  // "initial" | "stage1" | "stage2" | "joint" | "final"
    std::string p_sys;
    std::string p_cau;
    std::string scg_text;
    std::vector<std::string> candidates;  // SCG vocabulary, for self-contained parsing
    Metrics val_metrics;
    std::optional<Metrics> test_metrics;

    nlohmann::json to_json() const;
    static Checkpoint from_json(const nlohmann::json& doc);
    /// Stable content hash over the persisted form.
    std::string hash() const;
    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

nlohmann::json metrics_to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& doc);

/// The optimizer's working triple plus bookkeeping.
struct RunState {
    PromptVariable p_sys;
    PromptVariable p_cau;
    Scg g;
    double best_f1 = 0.0;
    Metrics best_metrics;
    int step = 0;
};

/// Cross-evaluation prediction cache: (triple hash, sample id) -> label.
using EvalCache = std::map<std::pair<std::string, std::string>, PredictedLabel>;

class Optimizer {
public:
    Optimizer(Task task, OptimizerConfig cfg, Gateway& gateway, EventLog& log);

    /// Full forwards over a split, cache-aware, bounded fan-out. Appends
    /// one eval record; per-call records land in sample order.
    Metrics evaluate(const PromptVariable& p_sys, const PromptVariable& p_cau, const Scg& g,
                     const std::vector<std::string>& sample_ids, const std::string& split_name,
                     const std::string& stage);

    /// One Algorithm-1 step over the train split (both stages, or the
    /// mode's subset). Returns the updated state.
    RunState optimize_step(RunState state, std::mt19937_64& rng);

    /// T steps starting from the task's initial triple, one repeat.
    /// Checkpoints are written under checkpoint_dir when set.
    RunState run_single(std::uint64_t seed, const std::string& checkpoint_dir);

    /// Repeats independent runs (seeds seed+i), returns the checkpoint
    /// with the best validation weighted F1; the test split is evaluated
    /// once, on the winner only.
    Checkpoint run(const std::string& checkpoint_dir);

    RunState initial_state() const;
    const Task& task() const { return task_; }
    const OptimizerConfig& config() const { return cfg_; }

    /// Start every repeat from a previously saved triple instead of the
    /// task's initial one (resuming from a checkpoint).
    void set_initial_triple(const std::string& p_sys, const std::string& p_cau,
                            const std::string& scg_text);

private:
    struct StageOutcome {
        bool attempted = false;
        bool accepted = false;
        double f_candidate = 0.0;
    };

    std::vector<std::string> sample_batch(std::mt19937_64& rng) const;
    ForwardTrace forward(const OrganizedPrompt& x, const PromptVariable& p_sys,
                         const PromptVariable& p_cau, const Scg& g, CallRecorder* recorder);
    std::string triple_hash(const PromptVariable& p_sys, const PromptVariable& p_cau,
                            const Scg& g) const;
    void log_decision(int step, const std::string& stage, bool accepted, double f_before,
                      double f_after, const RunState& state);
    void write_checkpoint(const RunState& state, const std::string& stage,
                          std::uint64_t seed, const std::string& dir);

    Task task_;
    OptimizerConfig cfg_;
    Gateway& gateway_;
    EventLog& log_;
    EvalCache cache_;
    std::optional<std::array<std::string, 3>> initial_override_;  // p_sys, p_cau, scg text
    std::size_t initial_sys_len_ = 0;   // length-guard references
    std::size_t initial_cau_len_ = 0;
    std::uint64_t current_seed_ = 0;
    std::string checkpoint_dir_;
    int checkpoint_counter_ = 0;
    std::optional<TextGradient> carried_sys_grad_;  // cross-step accumulation
    std::optional<TextGradient> carried_cau_grad_;
    std::optional<TextGradient> carried_scg_grad_;
};

/// Structural audit of the per-step call pattern: batch forwards, backward
/// chains, and at most two validation sweeps per step (cache hits exempt).
struct CallAudit {
    bool ok = true;
    std::vector<std::string> violations;
    std::map<int, std::map<std::string, int>> calls_by_step_and_kind;
};

CallAudit audit_call_pattern(const std::vector<nlohmann::json>& records,
                             const OptimizerConfig& cfg);

}  // namespace ego
