// Command-line front end. Talks to the core exclusively through the
// extern-C API in ego/ego.h; everything here is flag parsing, option
// assembly, and table printing.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ego/ego.h"

using nlohmann::json;

namespace {

struct OwnedString {
    char* ptr = nullptr;
    ~OwnedString() { ego_string_free(ptr); }
    std::string str() const { return ptr ? ptr : ""; }
};

struct TaskHandle {
    ego_task* ptr = nullptr;
    ~TaskHandle() { ego_task_free(ptr); }
};

[[noreturn]] void die(const std::string& context) {
    std::fprintf(stderr, "ego: %s: %s\n", context.c_str(), ego_last_error());
    std::exit(1);
}

std::string timestamp() {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&now));
    return buf;
}

struct CommonOpts {
    std::string task_path;
    std::string backend = "scripted";
    std::string script;
    std::string cassette;
    std::string endpoint;
    std::string model;
    std::string backward_endpoint;
    std::string backward_model;
    std::string endpoint_alias;
    std::string out;
    std::string run_name;
    std::string init_ckpt;
    std::string scg_setting = "full";
    int steps = 8;
    int batch = 3;
    unsigned long long seed = 0;
    int repeats = 3;
    std::string mode = "full";
    int val_n = 100;
    int test_n = 100;
    int eval_concurrency = 4;
};

void add_backend_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--backend", o.backend, "Backend: live, scripted, or replay")
        ->check(CLI::IsMember({"live", "scripted", "replay"}));
    cmd->add_option("--script", o.script, "Scripted-backend table (JSON)");
    cmd->add_option("--cassette", o.cassette, "Cassette file for --backend replay");
    cmd->add_option("--endpoint", o.endpoint, "OpenAI-compatible base URL for --backend live");
    cmd->add_option("--model", o.model, "Forward model name");
    cmd->add_option("--backward-endpoint", o.backward_endpoint, "Backward engine base URL");
    cmd->add_option("--backward-model", o.backward_model, "Backward engine model name");
    cmd->add_option("--endpoint-alias", o.endpoint_alias,
                    "API key alias; the key is read from EGO_API_KEY_<ALIAS>");
}

void add_run_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--task", o.task_path, "Task config (task.json)")->required();
    cmd->add_option("--steps", o.steps, "Optimization steps T");
    cmd->add_option("--batch", o.batch, "Minibatch size");
    cmd->add_option("--seed", o.seed, "Base random seed");
    cmd->add_option("--repeats", o.repeats, "Independent runs; the best one is reported");
    cmd->add_option("--mode", o.mode, "Optimizer mode")
        ->check(CLI::IsMember({"full", "single", "fixed-graph", "fixed-sys", "no-iter",
                               "no-opt"}));
    cmd->add_option("--val-n", o.val_n, "Validation split size");
    cmd->add_option("--test-n", o.test_n, "Test split size");
    cmd->add_option("--out", o.out, "Parent directory for run artifacts");
    cmd->add_option("--run-name", o.run_name, "Run directory name (default: timestamp-seed)");
    cmd->add_option("--scg", o.scg_setting,
                    "Initial-SCG setting: full, empty, reversed, or frac=<0..1>");
    cmd->add_option("--init-ckpt", o.init_ckpt,
                    "Resume: start from this checkpoint's triple instead of the task's");
    cmd->add_option("--eval-concurrency", o.eval_concurrency, "Parallel forwards during eval");
    add_backend_flags(cmd, o);
}

json options_from(const CommonOpts& o, const std::string& run_dir) {
    json opts{
        {"steps", o.steps},
        {"batch_size", o.batch},
        {"seed", o.seed},
        {"repeats", o.repeats},
        {"mode", o.mode},
        {"val_n", o.val_n},
        {"test_n", o.test_n},
        {"scg", o.scg_setting},
        {"backend", o.backend},
        {"eval_concurrency", o.eval_concurrency},
    };
    if (!o.script.empty()) opts["script"] = o.script;
    if (!o.cassette.empty()) opts["cassette"] = o.cassette;
    if (!o.endpoint.empty()) opts["endpoint"] = o.endpoint;
    if (!o.model.empty()) opts["model"] = o.model;
    if (!o.backward_endpoint.empty()) opts["backward_endpoint"] = o.backward_endpoint;
    if (!o.backward_model.empty()) opts["backward_model"] = o.backward_model;
    if (!o.endpoint_alias.empty()) {
        opts["key_alias"] = o.endpoint_alias;
        opts["backward_key_alias"] = o.endpoint_alias;
    }
    if (!o.init_ckpt.empty()) opts["init_checkpoint"] = o.init_ckpt;
    if (!run_dir.empty()) opts["out"] = run_dir;
    return opts;
}

std::string make_run_dir(const CommonOpts& o) {
    if (o.out.empty()) return "";
    std::string name =
        o.run_name.empty() ? timestamp() + "-seed" + std::to_string(o.seed) : o.run_name;
    return o.out + "/" + name;
}

TaskHandle load_task_or_die(const std::string& path) {
    TaskHandle task;
    if (ego_task_load(path.c_str(), &task.ptr) != EGO_OK) die("loading task " + path);
    return task;
}

void print_summary(const json& summary) {
    std::printf("task        %s\n", summary.value("task", std::string()).c_str());
    std::printf("mode        %s   steps %d   batch %d   repeats %d   seed %llu\n",
                summary.value("mode", std::string()).c_str(), summary.value("steps", 0),
                summary.value("batch_size", 0), summary.value("repeats", 0),
                static_cast<unsigned long long>(summary.value("seed", 0ULL)));
    const auto& best = summary.at("best");
    std::printf("best        seed %llu, step %d\n",
                static_cast<unsigned long long>(best.value("seed", 0ULL)),
                best.value("step", 0));
    std::printf("val         acc %.3f   weighted F1 %.3f\n", best.value("val_accuracy", 0.0),
                best.value("val_weighted_f1", 0.0));
    std::printf("test        acc %.3f   weighted F1 %.3f\n", best.value("test_accuracy", 0.0),
                best.value("test_weighted_f1", 0.0));
    std::printf("cost        %s   network attempts %ld\n",
                summary.value("total_cost_usd", std::string("$0")).c_str(),
                static_cast<long>(summary.value("network_attempts", 0L)));
    std::printf("checkpoint  %s\n", best.value("checkpoint_hash", std::string()).c_str());
    if (summary.contains("run_dir")) {
        std::printf("artifacts   %s\n", summary["run_dir"].get<std::string>().c_str());
    }
}

int cmd_optimize(const CommonOpts& o) {
    TaskHandle task = load_task_or_die(o.task_path);
    std::string run_dir = make_run_dir(o);
    json opts = options_from(o, run_dir);
    OwnedString summary_out;
    if (ego_optimize(task.ptr, opts.dump().c_str(), &summary_out.ptr) != EGO_OK) {
        die("optimize");
    }
    json summary = json::parse(summary_out.str());
    if (!run_dir.empty()) summary["run_dir"] = run_dir;
    print_summary(summary);
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& split, const std::string& checkpoint) {
    TaskHandle task = load_task_or_die(o.task_path);
    json opts = options_from(o, "");
    opts["split"] = split;
    if (!checkpoint.empty()) opts["checkpoint"] = checkpoint;
    OwnedString metrics_out;
    if (ego_evaluate(task.ptr, opts.dump().c_str(), &metrics_out.ptr) != EGO_OK) die("eval");
    json m = json::parse(metrics_out.str());
    std::printf("split       %s (n=%d)\n", m.value("split", std::string()).c_str(),
                m.value("n", 0));
    std::printf("accuracy    %.4f\n", m.value("accuracy", 0.0));
    std::printf("weighted F1 %.4f\n", m.value("weighted_f1", 0.0));
    std::printf("parse fail  %.4f\n", m.value("parse_failure_rate", 0.0));
    if (m.contains("per_class")) {
        std::printf("%-24s %9s %9s %9s %9s\n", "class", "precision", "recall", "f1", "support");
        for (const auto& c : m["per_class"]) {
            std::printf("%-24s %9.4f %9.4f %9.4f %9d\n",
                        c.value("label", std::string()).c_str(), c.value("precision", 0.0),
                        c.value("recall", 0.0), c.value("f1", 0.0), c.value("support", 0));
        }
    }
    if (m.contains("split_warning")) {
        std::fprintf(stderr, "warning: %s\n", m["split_warning"].get<std::string>().c_str());
    }
    return 0;
}

// Accepts either a checkpoint (.json with scg_text) or a plain SCG text
// file; candidates come from the checkpoint or from --task.
std::string scg_text_of(const std::string& path, std::string& candidates_json) {
    OwnedString ckpt_out;
    if (ego_checkpoint_read(path.c_str(), &ckpt_out.ptr) == EGO_OK) {
        json doc = json::parse(ckpt_out.str());
        if (candidates_json.empty() && doc.contains("candidates")) {
            candidates_json = doc["candidates"].dump();
        }
        return doc.value("scg_text", std::string());
    }
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) die("reading " + path);
    std::string text;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, n);
    std::fclose(f);
    return text;
}

int cmd_scg_diff(const std::string& old_path, const std::string& new_path,
                 const std::string& task_path) {
    std::string candidates_json;
    if (!task_path.empty()) {
        TaskHandle task = load_task_or_die(task_path);
        OwnedString info_out;
        if (ego_task_info(task.ptr, &info_out.ptr) != EGO_OK) die("task info");
        json info = json::parse(info_out.str());
        json nodes = info["candidate_nodes"];
        nodes.push_back(info["target_node"]);
        candidates_json = nodes.dump();
    }
    std::string old_text = scg_text_of(old_path, candidates_json);
    std::string new_text = scg_text_of(new_path, candidates_json);
    if (candidates_json.empty()) {
        std::fprintf(stderr,
                     "ego: scg-diff needs node candidates; pass checkpoints or --task\n");
        return 1;
    }
    OwnedString report;
    if (ego_scg_diff(old_text.c_str(), new_text.c_str(), candidates_json.c_str(),
                     &report.ptr) != EGO_OK) {
        die("scg-diff");
    }
    std::printf("%s", report.str().c_str());
    return 0;
}

int cmd_matrix(const CommonOpts& base, const std::vector<std::string>& values, bool is_modes) {
    TaskHandle task = load_task_or_die(base.task_path);
    std::printf("%-12s %9s %9s %9s %9s\n", is_modes ? "mode" : "scg", "val_acc", "val_f1",
                "test_acc", "test_f1");
    std::string csv = std::string(is_modes ? "mode" : "scg") + ",val_acc,val_f1,test_acc,test_f1\n";
    for (const auto& v : values) {
        CommonOpts o = base;
        if (is_modes) o.mode = v;
        else o.scg_setting = v;
        std::string run_dir = make_run_dir(o);
        if (!run_dir.empty()) {
            std::string suffix = v;
            for (char& c : suffix)
                if (c == '=' || c == '.') c = '_';
            run_dir += "-" + suffix;
        }
        json opts = options_from(o, run_dir);
        OwnedString summary_out;
        if (ego_optimize(task.ptr, opts.dump().c_str(), &summary_out.ptr) != EGO_OK) {
            die((is_modes ? "ablate mode " : "completeness ") + v);
        }
        json summary = json::parse(summary_out.str());
        const auto& best = summary.at("best");
        std::printf("%-12s %9.3f %9.3f %9.3f %9.3f\n", v.c_str(),
                    best.value("val_accuracy", 0.0), best.value("val_weighted_f1", 0.0),
                    best.value("test_accuracy", 0.0), best.value("test_weighted_f1", 0.0));
        char row[160];
        std::snprintf(row, sizeof(row), "%s,%.4f,%.4f,%.4f,%.4f\n", v.c_str(),
                      best.value("val_accuracy", 0.0), best.value("val_weighted_f1", 0.0),
                      best.value("test_accuracy", 0.0), best.value("test_weighted_f1", 0.0));
        csv += row;
    }
    if (!base.out.empty()) {
        std::string path = base.out + "/" + (is_modes ? "ablate.csv" : "completeness.csv");
        if (std::FILE* f = std::fopen(path.c_str(), "wb")) {
            std::fwrite(csv.data(), 1, csv.size(), f);
            std::fclose(f);
            std::printf("table       %s\n", path.c_str());
        }
    }
    return 0;
}

int cmd_cost(const std::string& run_dir) {
    OwnedString report_out;
    if (ego_cost_report(run_dir.c_str(), &report_out.ptr) != EGO_OK) die("cost");
    json report = json::parse(report_out.str());
    std::printf("%6s %12s %10s %8s\n", "step", "cost", "tokens", "calls");
    for (const auto& row : report["rows"]) {
        std::printf("%6d %12s %10ld %8d\n", row.value("step", 0),
                    row.value("cost_usd", std::string()).c_str(),
                    static_cast<long>(row.value("tokens", 0L)), row.value("calls", 0));
    }
    std::printf("setup (initial eval): %s\n",
                json(report.value("setup_cost_nanousd", 0LL) / 1e9).dump().c_str());
    std::printf("total: %s   mean per step: $%.6f\n",
                report.value("total_cost_usd", std::string()).c_str(),
                report.value("mean_step_cost_usd", 0.0));
    return 0;
}

int cmd_replay(const std::string& run_dir, const std::string& out) {
    json opts = json::object();
    if (!out.empty()) opts["out"] = out;
    OwnedString summary_out;
    if (ego_replay(run_dir.c_str(), opts.dump().c_str(), &summary_out.ptr) != EGO_OK) {
        die("replay");
    }
    json summary = json::parse(summary_out.str());
    print_summary(summary);
    bool matches = summary.value("matches_original", false);
    std::printf("replay      checkpoint %s original (network attempts: %ld)\n",
                matches ? "MATCHES" : "DIFFERS FROM",
                static_cast<long>(summary.value("network_attempts", 0L)));
    return matches ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Co-optimizes a semantic causal graph and a two-stage reasoning pipeline "
                 "with textual gradients"};
    app.require_subcommand(1);

    // init-task
    std::string init_dir;
    auto* init = app.add_subcommand("init-task", "Write a starter task into a directory");
    init->add_option("dir", init_dir, "Target directory")->required();

    // optimize
    CommonOpts opt_o;
    auto* optimize = app.add_subcommand("optimize", "Run the optimization loop");
    add_run_flags(optimize, opt_o);

    // eval
    CommonOpts eval_o;
    std::string eval_split = "val";
    std::string eval_ckpt;
    auto* eval = app.add_subcommand("eval", "Evaluate a triple on a split");
    add_run_flags(eval, eval_o);
    eval->add_option("--split", eval_split, "val, test, or train")
        ->check(CLI::IsMember({"val", "test", "train"}));
    eval->add_option("--ckpt", eval_ckpt, "Evaluate this checkpoint instead of the initial triple");

    // scg-diff
    std::string diff_old, diff_new, diff_task;
    auto* diff = app.add_subcommand("scg-diff", "Diff two SCGs (checkpoints or text files)");
    diff->add_option("old", diff_old)->required();
    diff->add_option("new", diff_new)->required();
    diff->add_option("--task", diff_task, "Task config supplying the node candidates");

    // ablate
    CommonOpts ablate_o;
    auto* ablate = app.add_subcommand("ablate", "Run the optimizer-mode matrix");
    add_run_flags(ablate, ablate_o);

    // completeness
    CommonOpts comp_o;
    auto* comp = app.add_subcommand("completeness", "Run the SCG completeness matrix");
    add_run_flags(comp, comp_o);

    // cost
    std::string cost_dir;
    auto* cost = app.add_subcommand("cost", "Print the per-step cost table of a run");
    cost->add_option("run_dir", cost_dir)->required();

    // replay
    std::string replay_dir, replay_out;
    auto* replay = app.add_subcommand("replay", "Re-execute a run from its cassette");
    replay->add_option("run_dir", replay_dir)->required();
    replay->add_option("--out", replay_out, "Directory for the replayed run");

    CLI11_PARSE(app, argc, argv);

    if (init->parsed()) {
        OwnedString path;
        if (ego_init_task(init_dir.c_str(), &path.ptr) != EGO_OK) die("init-task");
        std::printf("wrote %s\n", path.str().c_str());
        return 0;
    }
    if (optimize->parsed()) return cmd_optimize(opt_o);
    if (eval->parsed()) return cmd_eval(eval_o, eval_split, eval_ckpt);
    if (diff->parsed()) return cmd_scg_diff(diff_old, diff_new, diff_task);
    if (ablate->parsed()) {
        return cmd_matrix(ablate_o,
                          {"full", "single", "fixed-graph", "fixed-sys", "no-iter", "no-opt"},
                          true);
    }
    if (comp->parsed()) {
        return cmd_matrix(comp_o, {"full", "empty", "reversed", "frac=0.33", "frac=0.66"}, false);
    }
    if (cost->parsed()) return cmd_cost(cost_dir);
    if (replay->parsed()) return cmd_replay(replay_dir, replay_out);
    return 1;
}
