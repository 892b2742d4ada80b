#include "runner.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "error.hpp"
#include "util.hpp"

namespace ego {

namespace {

struct GatewayBundle {
    std::shared_ptr<Backend> backend;
    std::unique_ptr<Gateway> gateway;
    std::shared_ptr<std::ofstream> cassette_out;
    std::shared_ptr<std::set<std::string>> cassette_keys;
};

PriceTable price_from(const nlohmann::json& options, const char* role) {
    PriceTable p;
    if (options.contains("prices") && options["prices"].contains(role)) {
        const auto& doc = options["prices"][role];
        p.input_per_mtok = doc.value("input_per_mtok", 0.0);
        p.output_per_mtok = doc.value("output_per_mtok", 0.0);
    }
    return p;
}

GatewayBundle make_gateway(const nlohmann::json& options, const std::string& run_dir) {
    GatewayBundle bundle;
    const std::string kind = options.value("backend", std::string("scripted"));

    if (kind == "scripted") {
        if (!options.contains("script")) {
            throw Error(ErrorCode::Config, "scripted backend needs a 'script' file path");
        }
        bundle.backend = std::make_shared<ScriptedBackend>(
            ScriptedBackend::from_file(options["script"].get<std::string>()));
    } else if (kind == "replay") {
        if (!options.contains("cassette")) {
            throw Error(ErrorCode::Config, "replay backend needs a 'cassette' file path");
        }
        bundle.backend =
            std::make_shared<ReplayBackend>(options["cassette"].get<std::string>());
    } else if (kind == "live") {
        if (!options.contains("endpoint") || !options.contains("model")) {
            throw Error(ErrorCode::Config, "live backend needs 'endpoint' and 'model'");
        }
        bundle.backend = std::make_shared<HttpBackend>();
    } else {
        throw Error(ErrorCode::Config, "unknown backend kind: " + kind);
    }

    ModelSpec forward;
    forward.role = ModelRole::Forward;
    forward.endpoint = options.value("endpoint", std::string());
    forward.model = options.value("model", std::string("offline-forward"));
    forward.key_alias = options.value("key_alias", std::string());
    forward.max_tokens = options.value("max_tokens", 1024);
    forward.price = price_from(options, "forward");

    ModelSpec backward;
    backward.role = ModelRole::Backward;
    backward.endpoint = options.value("backward_endpoint", forward.endpoint);
    backward.model = options.value("backward_model", std::string("offline-backward"));
    backward.key_alias = options.value("backward_key_alias", forward.key_alias);
    backward.max_tokens = options.value("backward_max_tokens", 2048);
    backward.price = price_from(options, "backward");

    std::vector<ModelSpec> specs{forward, backward};
    // The graph-description slot defaults to the forward spec; override
    // any of its fields with graph_* keys.
    if (options.contains("graph_endpoint") || options.contains("graph_model") ||
        options.contains("graph_key_alias") || options.contains("graph_max_tokens") ||
        (options.contains("prices") && options["prices"].contains("graph_description"))) {
        ModelSpec graph = forward;
        graph.role = ModelRole::GraphDescription;
        graph.endpoint = options.value("graph_endpoint", forward.endpoint);
        graph.model = options.value("graph_model", forward.model);
        graph.key_alias = options.value("graph_key_alias", forward.key_alias);
        graph.max_tokens = options.value("graph_max_tokens", forward.max_tokens);
        if (options.contains("prices") && options["prices"].contains("graph_description")) {
            graph.price = price_from(options, "graph_description");
        }
        specs.push_back(graph);
    }
    bundle.gateway = std::make_unique<Gateway>(bundle.backend, std::move(specs));

    if (options.contains("retry")) {
        RetryPolicy rp;
        rp.max_attempts = options["retry"].value("max_attempts", rp.max_attempts);
        rp.base_delay_ms = options["retry"].value("base_delay_ms", rp.base_delay_ms);
        rp.max_delay_ms = options["retry"].value("max_delay_ms", rp.max_delay_ms);
        bundle.gateway->set_retry_policy(rp);
    }
    if (options.contains("rate_limit")) {
        RateLimit rl;
        rl.requests_per_second =
            options["rate_limit"].value("requests_per_second", rl.requests_per_second);
        rl.burst = options["rate_limit"].value("burst", rl.burst);
        bundle.gateway->set_rate_limit(rl);
    }

    const bool record = options.value("record", true) && kind != "replay";
    if (record && !run_dir.empty()) {
        bundle.cassette_out =
            std::make_shared<std::ofstream>(run_dir + "/cassette.jsonl", std::ios::binary);
        bundle.cassette_keys = std::make_shared<std::set<std::string>>();
        auto out = bundle.cassette_out;
        auto keys = bundle.cassette_keys;
        bundle.gateway->set_cassette_recorder(
            [out, keys](const std::string& key, const ChatResponse& resp) {
                if (!keys->insert(key).second) return;
                nlohmann::json rec{{"key", key},
                                   {"content", resp.content},
                                   {"prompt_tokens", resp.prompt_tokens},
                                   {"completion_tokens", resp.completion_tokens}};
                (*out) << rec.dump() << "\n";
                out->flush();
            });
    }
    return bundle;
}

Task build_task(const TaskSpec& spec_in, const RecordTable& table,
                const nlohmann::json& options) {
    TaskSpec spec = spec_in;
    const std::string setting = options.value("scg", std::string("full"));
    std::uint64_t seed = options.value("seed", 0ULL);
    if (setting != "full") {
        spec.initial_scg_text =
            apply_scg_setting(spec.initial_scg_text, spec.scg_vocabulary(), setting, seed);
    }
    int val_n = options.value("val_n", 100);
    int test_n = options.value("test_n", 100);
    Task task;
    task.spec = spec;
    task.table = table;
    task.split = balanced_split(table, spec.labels, val_n, test_n, seed);
    return task;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create directory " + dir + ": " + ec.message());
}

}  // namespace

std::string apply_scg_setting(const std::string& scg_text, const std::vector<NodeId>& vocabulary,
                              const std::string& setting, std::uint64_t seed) {
    if (setting == "full") return scg_text;
    if (setting == "empty") return "";
    Scg g = parse_scg(scg_text, vocabulary);
    if (setting == "reversed") return render_scg(reverse_scg(g));
    if (starts_with(setting, "frac=")) {
        double fraction = std::stod(setting.substr(5));
        return render_scg(subsample_scg(g, fraction, seed));
    }
    throw Error(ErrorCode::InvalidArgument, "unknown SCG setting: " + setting);
}

nlohmann::json task_info(const TaskSpec& spec, const RecordTable& table) {
    std::map<std::string, int> label_counts;
    for (const auto& r : table.rows) label_counts[r.gold] += 1;
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : spec.candidate_nodes) nodes.push_back(n.label);
    return nlohmann::json{
        {"name", spec.name},
        {"labels", spec.labels},
        {"rows", table.rows.size()},
        {"label_counts", label_counts},
        {"candidate_nodes", nodes},
        {"target_node", spec.target_node.label},
        {"initial_scg_statements",
         parse_scg(spec.initial_scg_text, spec.scg_vocabulary()).statements().size()},
    };
}

nlohmann::json run_optimize(const TaskSpec& spec, const RecordTable& table,
                            const std::string& task_config_path, const nlohmann::json& options) {
    const std::string run_dir = options.value("out", std::string());
    std::string checkpoint_dir;
    if (!run_dir.empty()) {
        ensure_dir(run_dir);
        checkpoint_dir = run_dir + "/checkpoints";
        ensure_dir(checkpoint_dir);
    }

    Task task = build_task(spec, table, options);
    OptimizerConfig cfg = OptimizerConfig::from_json(options);

    std::unique_ptr<EventLog> log = run_dir.empty()
                                        ? std::make_unique<EventLog>()
                                        : std::make_unique<EventLog>(run_dir + "/events.jsonl");
    GatewayBundle bundle = make_gateway(options, run_dir);

    long net_before = HttpBackend::network_attempts().load();
    Optimizer optimizer(task, cfg, *bundle.gateway, *log);
    if (options.contains("init_checkpoint")) {
        Checkpoint start = Checkpoint::load(options["init_checkpoint"].get<std::string>());
        optimizer.set_initial_triple(start.p_sys, start.p_cau, start.scg_text);
    }
    Checkpoint best = optimizer.run(checkpoint_dir);
    long net_attempts = HttpBackend::network_attempts().load() - net_before;

    CostReport costs = cost_report(bundle.gateway->ledger(), std::max(1, cfg.steps));
    nlohmann::json cost_rows = nlohmann::json::array();
    for (const auto& row : costs.rows) {
        cost_rows.push_back(nlohmann::json{{"step", row.step},
                                           {"cost_nanousd", row.cost_nanousd},
                                           {"cost_usd", format_usd(row.cost_nanousd)},
                                           {"tokens", row.tokens},
                                           {"calls", row.calls},
                                           {"cost_by_role", row.cost_by_role},
                                           {"calls_by_role", row.calls_by_role}});
    }
    nlohmann::json cost_doc{
        {"steps", std::max(1, cfg.steps)},
        {"rows", cost_rows},
        {"setup_cost_nanousd", costs.setup_cost_nanousd},
        {"total_cost_nanousd", costs.total_cost_nanousd},
        {"total_cost_usd", format_usd(costs.total_cost_nanousd)},
        {"mean_step_cost_usd", costs.mean_step_cost_usd},
        {"ledger_records", bundle.gateway->ledger().records().size()},
    };

    nlohmann::json summary{
        {"task", task.spec.name},
        {"mode", mode_name(cfg.mode)},
        {"steps", cfg.steps},
        {"batch_size", cfg.batch_size},
        {"seed", cfg.seed},
        {"repeats", cfg.repeats},
        {"val_n", options.value("val_n", 100)},
        {"test_n", options.value("test_n", 100)},
        {"scg_setting", options.value("scg", std::string("full"))},
        {"best",
         nlohmann::json{
             {"seed", best.seed},
             {"step", best.step},
             {"val_accuracy", best.val_metrics.accuracy},
             {"val_weighted_f1", best.val_metrics.weighted_f1},
             {"val_parse_failure_rate", best.val_metrics.parse_failure_rate},
             {"test_accuracy", best.test_metrics ? best.test_metrics->accuracy : 0.0},
             {"test_weighted_f1", best.test_metrics ? best.test_metrics->weighted_f1 : 0.0},
             {"checkpoint_hash", best.hash()},
         }},
        {"total_cost_usd", format_usd(costs.total_cost_nanousd)},
        {"network_attempts", net_attempts},
    };
    if (!run_dir.empty()) {
        summary["artifacts"] = nlohmann::json{
            {"events", "events.jsonl"},
            {"checkpoints", "checkpoints"},
            {"best_checkpoint", "checkpoints/best.json"},
            {"cost", "cost.json"},
            {"cassette", options.value("record", true) ? "cassette.jsonl" : ""},
        };
        nlohmann::json config_doc{
            {"task_config",
             task_config_path.empty()
                 ? std::string()
                 : std::filesystem::absolute(task_config_path).string()},
            {"options", options},
        };
        write_file_atomic(run_dir + "/config.json", config_doc.dump(2) + "\n");
        write_file_atomic(run_dir + "/cost.json", cost_doc.dump(2) + "\n");
        write_file_atomic(run_dir + "/summary.json", summary.dump(2) + "\n");
    }
    return summary;
}

nlohmann::json run_evaluate(const TaskSpec& spec, const RecordTable& table,
                            const nlohmann::json& options) {
    Task task = build_task(spec, table, options);
    OptimizerConfig cfg = OptimizerConfig::from_json(options);

    const std::string run_dir = options.value("out", std::string());
    std::unique_ptr<EventLog> log = run_dir.empty()
                                        ? std::make_unique<EventLog>()
                                        : (ensure_dir(run_dir),
                                           std::make_unique<EventLog>(run_dir + "/events.jsonl"));
    GatewayBundle bundle = make_gateway(options, run_dir);

    long net_before = HttpBackend::network_attempts().load();
    Optimizer optimizer(task, cfg, *bundle.gateway, *log);
    RunState state = optimizer.initial_state();

    if (options.contains("checkpoint")) {
        Checkpoint ckpt = Checkpoint::load(options["checkpoint"].get<std::string>());
        state.p_sys.value = ckpt.p_sys;
        state.p_cau.value = ckpt.p_cau;
        std::vector<NodeId> vocab;
        if (!ckpt.candidates.empty()) {
            for (const auto& c : ckpt.candidates) vocab.push_back(NodeId::make(c));
        } else {
            vocab = task.spec.scg_vocabulary();
        }
        state.g = parse_scg(ckpt.scg_text, vocab);
    }

    const std::string split_name = options.value("split", std::string("val"));
    const std::vector<std::string>* ids = nullptr;
    if (split_name == "val") ids = &task.split.val;
    else if (split_name == "test") ids = &task.split.test;
    else if (split_name == "train") ids = &task.split.train;
    else throw Error(ErrorCode::InvalidArgument, "unknown split: " + split_name);

    Metrics m = optimizer.evaluate(state.p_sys, state.p_cau, state.g, *ids, split_name, "eval");
    long net_attempts = HttpBackend::network_attempts().load() - net_before;

    nlohmann::json out = metrics_to_json(m);
    out["split"] = split_name;
    out["n"] = ids->size();
    out["network_attempts"] = net_attempts;
    if (!task.split.warning.empty()) out["split_warning"] = task.split.warning;
    return out;
}

nlohmann::json run_replay(const std::string& run_dir, const nlohmann::json& options) {
    nlohmann::json config_doc =
        nlohmann::json::parse(read_file(run_dir + "/config.json"));
    nlohmann::json original_summary =
        nlohmann::json::parse(read_file(run_dir + "/summary.json"));

    const std::string task_config = config_doc.at("task_config").get<std::string>();
    auto [spec, table] = load_task(task_config);

    nlohmann::json replay_options = config_doc.at("options");
    replay_options["backend"] = "replay";
    replay_options["cassette"] = run_dir + "/cassette.jsonl";
    replay_options["record"] = false;
    replay_options["out"] = options.value("out", run_dir + "-replay");

    long net_before = HttpBackend::network_attempts().load();
    nlohmann::json summary = run_optimize(spec, table, task_config, replay_options);
    long net_attempts = HttpBackend::network_attempts().load() - net_before;

    summary["replay_of"] = run_dir;
    summary["original_checkpoint_hash"] =
        original_summary["best"]["checkpoint_hash"].get<std::string>();
    summary["matches_original"] =
        summary["best"]["checkpoint_hash"] == summary["original_checkpoint_hash"];
    summary["network_attempts"] = net_attempts;
    return summary;
}

nlohmann::json cost_report_from_dir(const std::string& run_dir) {
    return nlohmann::json::parse(read_file(run_dir + "/cost.json"));
}

std::string init_task_scaffold(const std::string& dir) {
    ensure_dir(dir);
    nlohmann::json task{
        {"version", 1},
        {"name", "starter"},
        {"labels", {"low", "moderate", "high"}},
        {"description_tag", "Incident Description"},
        {"target_node", "Incident Severity"},
        {"candidate_nodes",
         {"Shift Time", "Machine Condition", "Operator State", "Floor Surface", "Task Load"}},
        {"template",
         "[Shift Time] The incident happened during the {shift} shift.\n"
         "[Machine Condition] The machine involved was {machine}.\n"
         "[Operator State] The operator was {operator}.\n"
         "[Floor Surface] The floor around the station was {surface}.\n"
         "[Task Load] The crew was handling {load}."},
        {"initial_scg",
         "Causal Statement 1: [Operator State] affects [Incident Severity].\n"
         "Fatigued or distracted operators react late, which turns small events into serious "
         "ones.\n\n"
         "Causal Statement 2: [Task Load] affects [Incident Severity].\n"
         "Heavier or rushed workloads raise the energy involved in any mishap.\n\n"
         "Causal Statement 3: [Shift Time] affects [Operator State].\n"
         "Late shifts leave operators more fatigued than day shifts."},
        {"system_prompt",
         "Rate how severe the injury from the described workshop incident is likely to be, "
         "using the incident details between <Incident Description> and </Incident "
         "Description> and the reasoning guidance when present."},
        {"causal_system_prompt",
         "Read the causal relations and the incident description, then state which causal "
         "factors apply to this specific case and how they interact."},
        {"output_format",
         "The last line of your response must be exactly <VALUE>, where VALUE is one of: low, "
         "moderate, high."},
        {"data", "data.csv"},
    };
    std::string csv =
        "id,label,shift,machine,operator,surface,load\n"
        "s01,low,day,recently serviced,rested and attentive,clean and dry,a light batch\n"
        "s02,low,day,recently serviced,rested and attentive,clean and dry,routine parts\n"
        "s03,low,evening,in normal order,rested and attentive,swept,routine parts\n"
        "s04,moderate,evening,overdue for service,slightly fatigued,dusty,a standard batch\n"
        "s05,moderate,night,in normal order,slightly fatigued,clean and dry,a rush order\n"
        "s06,moderate,night,overdue for service,rested and attentive,oily in patches,routine "
        "parts\n"
        "s07,high,night,reported faulty,visibly exhausted,oily in patches,a rush order\n"
        "s08,high,night,overdue for service,visibly exhausted,wet near the press,a heavy "
        "casting run\n"
        "s09,high,evening,reported faulty,distracted by a phone call,wet near the press,a "
        "heavy casting run\n";
    std::string config_path = dir + "/task.json";
    write_file_atomic(config_path, task.dump(2) + "\n");
    write_file_atomic(dir + "/data.csv", csv);
    return config_path;
}

}  // namespace ego
