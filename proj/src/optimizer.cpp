#include "optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "error.hpp"
#include "util.hpp"

namespace ego {

OptimizerMode parse_mode(const std::string& name) {
    if (name == "full") return OptimizerMode::Full;
    if (name == "single") return OptimizerMode::SingleModel;
    if (name == "fixed-graph") return OptimizerMode::FixedGraphSide;
    if (name == "fixed-sys") return OptimizerMode::FixedSysPrompt;
    if (name == "no-iter") return OptimizerMode::NoIterative;
    if (name == "no-opt") return OptimizerMode::NoOpt;
    throw Error(ErrorCode::InvalidArgument, "unknown optimizer mode: " + name);
}

const char* mode_name(OptimizerMode mode) {
    switch (mode) {
        case OptimizerMode::Full: return "full";
        case OptimizerMode::SingleModel: return "single";
        case OptimizerMode::FixedGraphSide: return "fixed-graph";
        case OptimizerMode::FixedSysPrompt: return "fixed-sys";
        case OptimizerMode::NoIterative: return "no-iter";
        case OptimizerMode::NoOpt: return "no-opt";
    }
    return "unknown";
}

nlohmann::json OptimizerConfig::to_json() const {
    return nlohmann::json{
        {"steps", steps},
        {"batch_size", batch_size},
        {"seed", seed},
        {"mode", mode_name(mode)},
        {"repeats", repeats},
        {"eval_concurrency", eval_concurrency},
        {"max_length_factor", max_length_factor},
        {"accumulate_across_steps", accumulate_across_steps},
    };
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& doc) {
    OptimizerConfig cfg;
    cfg.steps = doc.value("steps", cfg.steps);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.mode = parse_mode(doc.value("mode", std::string("full")));
    cfg.repeats = doc.value("repeats", cfg.repeats);
    cfg.eval_concurrency = doc.value("eval_concurrency", cfg.eval_concurrency);
    cfg.max_length_factor = doc.value("max_length_factor", cfg.max_length_factor);
    cfg.accumulate_across_steps =
        doc.value("accumulate_across_steps", cfg.accumulate_across_steps);
    if (cfg.steps < 0) throw Error(ErrorCode::InvalidArgument, "steps must be >= 0");
    if (cfg.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    if (cfg.repeats < 1) throw Error(ErrorCode::InvalidArgument, "repeats must be >= 1");
    if (cfg.eval_concurrency < 1) cfg.eval_concurrency = 1;
    return cfg;
}

nlohmann::json metrics_to_json(const Metrics& m) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& c : m.per_class) {
        per_class.push_back({{"label", c.label},
                             {"precision", c.precision},
                             {"recall", c.recall},
                             {"f1", c.f1},
                             {"support", c.support}});
    }
    return nlohmann::json{
        {"accuracy", m.accuracy},
        {"weighted_f1", m.weighted_f1},
        {"parse_failure_rate", m.parse_failure_rate},
        {"per_class", per_class},
        {"confusion", m.confusion},
        {"total", m.total},
    };
}

Metrics metrics_from_json(const nlohmann::json& doc) {
    Metrics m;
    m.accuracy = doc.value("accuracy", 0.0);
    m.weighted_f1 = doc.value("weighted_f1", 0.0);
    m.parse_failure_rate = doc.value("parse_failure_rate", 0.0);
    m.total = doc.value("total", 0);
    if (doc.contains("confusion")) {
        m.confusion = doc["confusion"].get<std::vector<std::vector<int>>>();
    }
    if (doc.contains("per_class")) {
        for (const auto& c : doc["per_class"]) {
            ClassScore cs;
            cs.label = c.value("label", std::string());
            cs.precision = c.value("precision", 0.0);
            cs.recall = c.value("recall", 0.0);
            cs.f1 = c.value("f1", 0.0);
            cs.support = c.value("support", 0);
            m.per_class.push_back(cs);
        }
    }
    return m;
}

nlohmann::json Checkpoint::to_json() const {
    nlohmann::json doc{
        {"version", version},
        {"task", task},
        {"config", config.to_json()},
        {"seed", seed},
        {"step", step},
        {"stage", stage},
        {"p_sys", p_sys},
        {"p_cau", p_cau},
        {"scg_text", scg_text},
        {"candidates", candidates},
        {"metrics", nlohmann::json{{"val", metrics_to_json(val_metrics)}}},
        {"hashes",
         nlohmann::json{{"p_sys", content_hash(p_sys)},
                        {"p_cau", content_hash(p_cau)},
                        {"scg", content_hash(scg_text)}}},
    };
    if (test_metrics) doc["metrics"]["test"] = metrics_to_json(*test_metrics);
    return doc;
}

Checkpoint Checkpoint::from_json(const nlohmann::json& doc) {
    Checkpoint c;
    c.version = doc.value("version", 1);
    c.task = doc.value("task", std::string());
    c.config = OptimizerConfig::from_json(doc.value("config", nlohmann::json::object()));
    c.seed = doc.value("seed", 0ULL);
    c.step = doc.value("step", 0);
    c.stage = doc.value("stage", std::string());
    c.p_sys = doc.at("p_sys").get<std::string>();
    c.p_cau = doc.at("p_cau").get<std::string>();
    c.scg_text = doc.at("scg_text").get<std::string>();
    if (doc.contains("candidates")) {
        c.candidates = doc["candidates"].get<std::vector<std::string>>();
    }
    if (doc.contains("metrics")) {
        if (doc["metrics"].contains("val")) c.val_metrics = metrics_from_json(doc["metrics"]["val"]);
        if (doc["metrics"].contains("test"))
            c.test_metrics = metrics_from_json(doc["metrics"]["test"]);
    }
    return c;
}

std::string Checkpoint::hash() const { return content_hash(to_json().dump()); }

void Checkpoint::save(const std::string& path) const {
    write_file_atomic(path, to_json().dump(2) + "\n");
}

Checkpoint Checkpoint::load(const std::string& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::Config, path + ": not a checkpoint: " + e.what());
    }
}

// --- Optimizer -------------------------------------------------------------

namespace {

PromptVariable make_scg_variable(const TaskSpec& spec, const Scg& g) {
    PromptVariable var;
    var.name = kScgVar;
    var.role = "The semantic causal graph: numbered causal statements over the task's "
               "information blocks, used to derive per-case reasoning guidance.";
    var.value = render_scg(g);
    std::string nodes;
    for (const auto& n : spec.scg_vocabulary()) {
        if (!nodes.empty()) nodes += ", ";
        nodes += "[" + n.label + "]";
    }
    var.constraints =
        "Revise the graph only by adding, deleting, or editing numbered causal statements of "
        "the form:\nCausal Statement k: [Node A] affects [Node B].\n(one explanatory line)\n"
        "Every node must come from this list: " +
        nodes +
        ". Statements may relate nodes to each other, not only to the prediction target. "
        "The relations must remain free of directed cycles.";
    return var;
}

}  // namespace

Optimizer::Optimizer(Task task, OptimizerConfig cfg, Gateway& gateway, EventLog& log)
    : task_(std::move(task)), cfg_(cfg), gateway_(gateway), log_(log) {
    gateway_.set_event_log(&log_);
}

RunState Optimizer::initial_state() const {
    RunState state;
    state.p_sys.name = kSystemPromptVar;
    state.p_sys.role = "System prompt steering the predictor, which reads the case description "
                       "and the reasoning guidance.";
    state.p_sys.value = task_.spec.system_prompt;
    state.p_sys.constraints =
        "Keep the task definition and the label vocabulary intact. The output-format clause is "
        "fixed and appended separately; do not restate or alter it.";

    state.p_cau.name = kCausalPromptVar;
    state.p_cau.role = "Causal system prompt steering the graph description model that distills "
                       "instance-specific guidance from the causal relations.";
    state.p_cau.value = task_.spec.causal_system_prompt;
    state.p_cau.constraints =
        "The prompt must keep directing the model to ground its guidance in the supplied causal "
        "relations and the case details.";

    state.g = parse_scg(task_.spec.initial_scg_text, task_.spec.scg_vocabulary());
    if (initial_override_) {
        state.p_sys.value = (*initial_override_)[0];
        state.p_cau.value = (*initial_override_)[1];
        state.g = parse_scg((*initial_override_)[2], task_.spec.scg_vocabulary());
    }
    state.step = 0;
    return state;
}

void Optimizer::set_initial_triple(const std::string& p_sys, const std::string& p_cau,
                                   const std::string& scg_text) {
    initial_override_ = {p_sys, p_cau, scg_text};
}

std::string Optimizer::triple_hash(const PromptVariable& p_sys, const PromptVariable& p_cau,
                                   const Scg& g) const {
    const char sep = '\x1f';
    std::string key;
    key += p_sys.value;
    key += sep;
    key += p_cau.value;
    key += sep;
    key += render_scg(g);
    key += sep;
    key += mode_name(cfg_.mode);
    key += sep;
    key += gateway_.spec_for(ModelRole::Forward).model;
    return content_hash(key);
}

ForwardTrace Optimizer::forward(const OrganizedPrompt& x, const PromptVariable& p_sys,
                                const PromptVariable& p_cau, const Scg& g,
                                CallRecorder* recorder) {
    ForwardOptions opts;
    opts.single_model = cfg_.mode == OptimizerMode::SingleModel;
    return full_forward(x, g, p_cau, p_sys, task_.spec.output_format, task_.spec.labels, gateway_,
                        opts, recorder);
}

Metrics Optimizer::evaluate(const PromptVariable& p_sys, const PromptVariable& p_cau, const Scg& g,
                            const std::vector<std::string>& sample_ids,
                            const std::string& split_name, const std::string& stage) {
    if (sample_ids.empty()) {
        throw Error(ErrorCode::InvalidArgument, "cannot evaluate an empty split");
    }
    const std::string triple = triple_hash(p_sys, p_cau, g);

    struct Slot {
        std::string id;
        bool cached = false;
        PredictedLabel label;
        CallRecorder recorder;
        bool done = false;
    };
    std::vector<Slot> slots(sample_ids.size());
    std::vector<std::size_t> misses;
    for (std::size_t i = 0; i < sample_ids.size(); ++i) {
        slots[i].id = sample_ids[i];
        auto it = cache_.find({triple, sample_ids[i]});
        if (it != cache_.end()) {
            slots[i].cached = true;
            slots[i].label = it->second;
            slots[i].done = true;
        } else {
            misses.push_back(i);
        }
    }

    std::mutex cache_mu;
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;

    auto worker = [&] {
        while (true) {
            std::size_t k = next.fetch_add(1);
            if (k >= misses.size()) return;
            {
                std::lock_guard<std::mutex> lock(error_mu);
                if (first_error) return;
            }
            Slot& slot = slots[misses[k]];
            try {
                OrganizedPrompt x = render_prompt(task_.spec, task_.table.by_id(slot.id));
                ForwardTrace trace = forward(x, p_sys, p_cau, g, &slot.recorder);
                slot.label = trace.label;
                slot.done = true;
                std::lock_guard<std::mutex> lock(cache_mu);
                cache_[{triple, slot.id}] = slot.label;
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    int n_threads = std::min<int>(cfg_.eval_concurrency, static_cast<int>(misses.size()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // Flush call records in sample order so logs stay byte-stable no
    // matter how the fan-out interleaved.
    int model_calls = 0;
    for (auto& slot : slots) {
        if (!slot.done) continue;
        for (auto& rec : slot.recorder.take()) {
            ++model_calls;
            log_.append(rec);
        }
    }
    if (first_error) std::rethrow_exception(first_error);

    std::vector<PredictedLabel> preds;
    std::vector<std::string> golds;
    preds.reserve(slots.size());
    for (const auto& slot : slots) {
        preds.push_back(slot.label);
        golds.push_back(task_.table.by_id(slot.id).gold);
    }
    Metrics m = compute_metrics(preds, golds, task_.spec.labels);

    int cache_hits = 0;
    for (const auto& slot : slots)
        if (slot.cached) ++cache_hits;
    log_.append(nlohmann::json{
        {"type", "eval"},
        {"step", gateway_.ledger().step()},
        {"split", split_name},
        {"stage", stage},
        {"triple", triple},
        {"n", sample_ids.size()},
        {"cache_hits", cache_hits},
        {"model_calls", model_calls},
        {"metrics",
         nlohmann::json{{"accuracy", m.accuracy},
                        {"weighted_f1", m.weighted_f1},
                        {"parse_failure_rate", m.parse_failure_rate}}},
    });
    return m;
}

std::vector<std::string> Optimizer::sample_batch(std::mt19937_64& rng) const {
    const auto& pool = task_.split.train;
    if (pool.empty()) throw Error(ErrorCode::InvalidArgument, "training split is empty");
    std::size_t n = pool.size();
    std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg_.batch_size), n);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<std::string> batch;
    for (std::size_t i = 0; i < k; ++i) batch.push_back(pool[idx[i]]);
    return batch;
}

void Optimizer::log_decision(int step, const std::string& stage, bool accepted, double f_before,
                             double f_after, const RunState& state) {
    log_.append(nlohmann::json{
        {"type", "decision"},
        {"step", step},
        {"stage", stage},
        {"accepted", accepted},
        {"f_before", f_before},
        {"f_after", f_after},
        {"p_sys_hash", content_hash(state.p_sys.value)},
        {"p_cau_hash", content_hash(state.p_cau.value)},
        {"scg_hash", content_hash(render_scg(state.g))},
    });
}

void Optimizer::write_checkpoint(const RunState& state, const std::string& stage,
                                 std::uint64_t seed, const std::string& dir) {
    Checkpoint ckpt;
    ckpt.task = task_.spec.name;
    ckpt.config = cfg_;
    ckpt.seed = seed;
    ckpt.step = state.step;
    ckpt.stage = stage;
    ckpt.p_sys = state.p_sys.value;
    ckpt.p_cau = state.p_cau.value;
    ckpt.scg_text = render_scg(state.g);
    for (const auto& n : task_.spec.scg_vocabulary()) ckpt.candidates.push_back(n.label);
    ckpt.val_metrics = state.best_metrics;

    char name[64];
    std::snprintf(name, sizeof(name), "ckpt-%03d-step%d-%s.json", checkpoint_counter_++,
                  state.step, stage.c_str());
    if (!dir.empty()) {
        ckpt.save(dir + "/" + name);
    }
    log_.append(nlohmann::json{
        {"type", "checkpoint"},
        {"step", state.step},
        {"stage", stage},
        {"file", name},
        {"hash", ckpt.hash()},
        {"val_f1", state.best_f1},
    });
}

RunState Optimizer::optimize_step(RunState state, std::mt19937_64& rng) {
    const int step = state.step + 1;
    gateway_.ledger().set_step(step);

    std::vector<std::string> batch = sample_batch(rng);
    log_.append(nlohmann::json{{"type", "batch"}, {"step", step}, {"samples", batch}});

    PromptVariable scg_var = make_scg_variable(task_.spec, state.g);

    // Forwards and losses for the batch.
    std::vector<ForwardTrace> traces;
    for (const auto& id : batch) {
        OrganizedPrompt x = render_prompt(task_.spec, task_.table.by_id(id));
        traces.push_back(forward(x, state.p_sys, state.p_cau, state.g, nullptr));
    }

    const bool want_sys = cfg_.mode != OptimizerMode::FixedSysPrompt;
    const bool want_graph_side = cfg_.mode != OptimizerMode::FixedGraphSide;

    // Backward chains: one output gradient per sample, then per-variable
    // gradients for whatever this mode optimizes.
    std::vector<TextGradient> sys_grads, cau_grads, scg_grads;
    for (const auto& trace : traces) {
        std::string out_grad = output_gradient(trace, trace.loss, gateway_);
        if (want_sys && trace.participants.count(kSystemPromptVar)) {
            sys_grads.push_back(variable_gradient(state.p_sys, trace, out_grad, gateway_));
        }
        if (want_graph_side && trace.participants.count(kCausalPromptVar)) {
            cau_grads.push_back(variable_gradient(state.p_cau, trace, out_grad, gateway_));
        }
        if (want_graph_side && trace.participants.count(kScgVar)) {
            scg_grads.push_back(variable_gradient(scg_var, trace, out_grad, gateway_));
        }
    }

    auto fold = [&](std::vector<TextGradient>& fresh, std::optional<TextGradient>& carried)
        -> std::optional<TextGradient> {
        if (fresh.empty()) return std::nullopt;
        TextGradient acc = accumulate(fresh);
        if (cfg_.accumulate_across_steps) {
            if (carried) acc = accumulate({*carried, acc});
            carried = acc;
        }
        return acc;
    };
    auto sys_grad = fold(sys_grads, carried_sys_grad_);
    auto cau_grad = fold(cau_grads, carried_cau_grad_);
    auto scg_grad = fold(scg_grads, carried_scg_grad_);

    // Prompts are capped relative to their initial length; the graph is
    // constrained structurally (parse + vocabulary + DAG), never by size,
    // or an empty starting graph could not grow.
    ApplyOptions scg_opts;
    scg_opts.scg_candidates = task_.spec.scg_vocabulary();
    scg_opts.max_length_factor = 0.0;
    ApplyOptions sys_opts;
    sys_opts.max_length_factor = cfg_.max_length_factor;
    sys_opts.length_reference = initial_sys_len_;
    ApplyOptions cau_opts;
    cau_opts.max_length_factor = cfg_.max_length_factor;
    cau_opts.length_reference = initial_cau_len_;

    auto commit = [&](RunState& st, const std::string& stage, double f_candidate,
                      const Metrics& m_candidate) {
        st.best_f1 = f_candidate;
        st.best_metrics = m_candidate;
        log_decision(step, stage, true, state.best_f1, f_candidate, st);
        write_checkpoint(st, stage, current_seed_, checkpoint_dir_);
    };

    if (cfg_.mode == OptimizerMode::NoIterative) {
        // Both stages' candidates applied and tested once, jointly.
        RunState candidate = state;
        candidate.step = step;
        bool changed = false;
        std::string reject_reason;
        try {
            if (sys_grad) {
                candidate.p_sys.value =
                    apply_gradient(state.p_sys, *sys_grad, gateway_, sys_opts);
                changed = changed || candidate.p_sys.value != state.p_sys.value;
            }
            if (cau_grad) {
                candidate.p_cau.value =
                    apply_gradient(state.p_cau, *cau_grad, gateway_, cau_opts);
                changed = changed || candidate.p_cau.value != state.p_cau.value;
            }
            if (scg_grad) {
                std::string text = apply_gradient(scg_var, *scg_grad, gateway_, scg_opts);
                candidate.g = parse_scg(text, task_.spec.scg_vocabulary());
                changed = changed || !(candidate.g == state.g);
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::RejectedEdit) throw;
            reject_reason = e.what();
            changed = false;
        }
        (void)changed;
        double f_before = state.best_f1;
        if (reject_reason.empty()) {
            Metrics m = evaluate(candidate.p_sys, candidate.p_cau, candidate.g, task_.split.val,
                                 "val", "joint");
            if (m.weighted_f1 > f_before) {
                candidate.p_sys.history.emplace_back(step, state.p_sys.value);
                candidate.p_cau.history.emplace_back(step, state.p_cau.value);
                commit(candidate, "joint", m.weighted_f1, m);
                candidate.step = step;
                return candidate;
            }
            log_decision(step, "joint", false, f_before, m.weighted_f1, state);
        } else {
            log_decision(step, "joint", false, f_before, f_before, state);
        }
        state.step = step;
        return state;
    }

    // Stage 1: system prompt.
    if (want_sys && sys_grad) {
        std::string candidate_value;
        bool rejected_edit = false;
        try {
            candidate_value = apply_gradient(state.p_sys, *sys_grad, gateway_, sys_opts);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::RejectedEdit) throw;
            rejected_edit = true;
        }
        if (!rejected_edit) {
            PromptVariable p_sys_cand = state.p_sys;
            p_sys_cand.value = candidate_value;
            Metrics m = evaluate(p_sys_cand, state.p_cau, state.g, task_.split.val, "val",
                                 "stage1");
            if (m.weighted_f1 > state.best_f1) {
                RunState next = state;
                next.step = step;
                next.p_sys.history.emplace_back(step, state.p_sys.value);
                next.p_sys.value = candidate_value;
                commit(next, "stage1", m.weighted_f1, m);
                state = next;
            } else {
                log_decision(step, "stage1", false, state.best_f1, m.weighted_f1, state);
            }
        } else {
            log_decision(step, "stage1", false, state.best_f1, state.best_f1, state);
        }
    }

    // Stage 2: SCG and causal prompt together, one atomic accept test.
    if (want_graph_side && (cau_grad || scg_grad)) {
        RunState candidate = state;
        bool rejected_edit = false;
        try {
            if (cau_grad) {
                candidate.p_cau.value =
                    apply_gradient(state.p_cau, *cau_grad, gateway_, cau_opts);
            }
            if (scg_grad) {
                std::string text = apply_gradient(scg_var, *scg_grad, gateway_, scg_opts);
                candidate.g = parse_scg(text, task_.spec.scg_vocabulary());
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::RejectedEdit) throw;
            rejected_edit = true;
        }
        if (!rejected_edit) {
            Metrics m = evaluate(state.p_sys, candidate.p_cau, candidate.g, task_.split.val,
                                 "val", "stage2");
            if (m.weighted_f1 > state.best_f1) {
                candidate.step = step;
                candidate.p_cau.history.emplace_back(step, state.p_cau.value);
                commit(candidate, "stage2", m.weighted_f1, m);
                state = candidate;
            } else {
                log_decision(step, "stage2", false, state.best_f1, m.weighted_f1, state);
            }
        } else {
            log_decision(step, "stage2", false, state.best_f1, state.best_f1, state);
        }
    }

    state.step = step;
    return state;
}

RunState Optimizer::run_single(std::uint64_t seed, const std::string& checkpoint_dir) {
    current_seed_ = seed;
    checkpoint_dir_ = checkpoint_dir;
    std::mt19937_64 rng(seed);

    RunState state = initial_state();
    initial_sys_len_ = state.p_sys.value.size();
    initial_cau_len_ = state.p_cau.value.size();
    gateway_.ledger().set_step(0);
    Metrics initial = evaluate(state.p_sys, state.p_cau, state.g, task_.split.val, "val",
                               "initial");
    state.best_f1 = initial.weighted_f1;
    state.best_metrics = initial;
    write_checkpoint(state, "initial", seed, checkpoint_dir);

    int steps = cfg_.mode == OptimizerMode::NoOpt ? 0 : cfg_.steps;
    for (int t = 0; t < steps; ++t) {
        state = optimize_step(std::move(state), rng);
    }
    return state;
}

Checkpoint Optimizer::run(const std::string& checkpoint_dir) {
    std::optional<RunState> best;
    std::uint64_t best_seed = 0;
    for (int r = 0; r < cfg_.repeats; ++r) {
        std::uint64_t seed = cfg_.seed + static_cast<std::uint64_t>(r);
        log_.append(nlohmann::json{
            {"type", "run_start"},
            {"repeat", r},
            {"seed", seed},
            {"task", task_.spec.name},
            {"mode", mode_name(cfg_.mode)},
            {"steps", cfg_.steps},
            {"batch_size", cfg_.batch_size},
        });
        carried_sys_grad_.reset();
        carried_cau_grad_.reset();
        carried_scg_grad_.reset();
        RunState state = run_single(seed, checkpoint_dir);
        log_.append(nlohmann::json{
            {"type", "run_end"}, {"repeat", r}, {"seed", seed}, {"best_f1", state.best_f1}});
        if (!best || state.best_f1 > best->best_f1) {
            best = state;
            best_seed = seed;
        }
    }

    // Test evaluation happens once, on the winner only.
    gateway_.ledger().set_step(-1);
    Checkpoint ckpt;
    ckpt.task = task_.spec.name;
    ckpt.config = cfg_;
    ckpt.seed = best_seed;
    ckpt.step = best->step;
    ckpt.stage = "final";
    ckpt.p_sys = best->p_sys.value;
    ckpt.p_cau = best->p_cau.value;
    ckpt.scg_text = render_scg(best->g);
    for (const auto& n : task_.spec.scg_vocabulary()) ckpt.candidates.push_back(n.label);
    ckpt.val_metrics = best->best_metrics;
    if (!task_.split.test.empty()) {
        ckpt.test_metrics = evaluate(best->p_sys, best->p_cau, best->g, task_.split.test, "test",
                                     "final_test");
    }
    if (!checkpoint_dir.empty()) {
        ckpt.save(checkpoint_dir + "/best.json");
    }
    log_.append(nlohmann::json{
        {"type", "final"},
        {"seed", best_seed},
        {"checkpoint_hash", ckpt.hash()},
        {"val_f1", ckpt.val_metrics.weighted_f1},
        {"test_f1", ckpt.test_metrics ? ckpt.test_metrics->weighted_f1 : 0.0},
    });
    return ckpt;
}

// --- Call-pattern audit ------------------------------------------------------

namespace {

std::string tag_kind(const std::string& tag) {
    auto sep = tag.find("::");
    if (sep == std::string::npos) return tag;
    return tag.substr(0, sep);
}

}  // namespace

CallAudit audit_call_pattern(const std::vector<nlohmann::json>& records,
                             const OptimizerConfig& cfg) {
    CallAudit audit;
    auto violate = [&](const std::string& msg) {
        audit.ok = false;
        audit.violations.push_back(msg);
    };

    std::map<int, int> val_evals_per_step;
    int repeats_seen = 0;
    int test_evals = 0;
    for (const auto& rec : records) {
        const std::string type = rec.value("type", "");
        if (type == "run_start") ++repeats_seen;
        if (type == "model_call") {
            int step = rec.value("step", 0);
            audit.calls_by_step_and_kind[step][tag_kind(rec.value("tag", ""))] += 1;
        } else if (type == "eval") {
            if (rec.value("split", "") == "val" && rec.value("step", 0) >= 1) {
                val_evals_per_step[rec.value("step", 0)] += 1;
            }
            if (rec.value("split", "") == "test") ++test_evals;
        }
    }

    for (const auto& [step, n] : val_evals_per_step) {
        if (n > 2) {
            violate("step " + std::to_string(step) + " ran " + std::to_string(n) +
                    " validation sweeps (max 2: one per stage)");
        }
    }
    if (repeats_seen > 0 && test_evals > repeats_seen) {
        violate("more test evaluations than runs: " + std::to_string(test_evals));
    }

    const int b = cfg.batch_size;
    for (const auto& [step, kinds] : audit.calls_by_step_and_kind) {
        if (step < 1) continue;  // setup (initial eval) and final test
        auto count = [&](const char* k) {
            auto it = kinds.find(k);
            return it == kinds.end() ? 0 : it->second;
        };
        if (count("gradout") > b) {
            violate("step " + std::to_string(step) + ": more output gradients than batch size");
        }
        if (count("gradvar") > 3 * b) {
            violate("step " + std::to_string(step) + ": more variable gradients than 3x batch");
        }
        if (count("apply") > 3) {
            violate("step " + std::to_string(step) + ": more than 3 optimizer applications");
        }
        for (const auto& [kind, n] : kinds) {
            (void)n;
            if (kind != "guidance" && kind != "guidance_retry" && kind != "predict" &&
                kind != "gradout" && kind != "gradvar" && kind != "apply") {
                violate("step " + std::to_string(step) + ": unknown call kind '" + kind + "'");
            }
        }
    }
    return audit;
}

}  // namespace ego
