#include "ego/ego.h"

#include <cstring>
#include <string>

#include <json.hpp>

#include "dataset.hpp"
#include "error.hpp"
#include "optimizer.hpp"
#include "runner.hpp"
#include "scg.hpp"
#include "util.hpp"

using nlohmann::json;

namespace {

thread_local std::string t_last_error = "";

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

ego_status status_for(ego::ErrorCode code) {
    using ego::ErrorCode;
    switch (code) {
        case ErrorCode::Syntax: return EGO_ERR_SYNTAX;
        case ErrorCode::UnknownNode: return EGO_ERR_UNKNOWN_NODE;
        case ErrorCode::Cycle: return EGO_ERR_CYCLE;
        case ErrorCode::Index: return EGO_ERR_INDEX;
        case ErrorCode::MixedTarget: return EGO_ERR_MIXED_TARGET;
        case ErrorCode::RejectedEdit: return EGO_ERR_REJECTED_EDIT;
        case ErrorCode::Backend: return EGO_ERR_BACKEND;
        case ErrorCode::ScriptMiss: return EGO_ERR_SCRIPT_MISS;
        case ErrorCode::Envelope: return EGO_ERR_ENVELOPE;
        case ErrorCode::Config: return EGO_ERR_CONFIG;
        case ErrorCode::MissingField: return EGO_ERR_MISSING_FIELD;
        case ErrorCode::LengthMismatch: return EGO_ERR_LENGTH_MISMATCH;
        case ErrorCode::InsufficientData: return EGO_ERR_INSUFFICIENT_DATA;
        case ErrorCode::Precondition: return EGO_ERR_PRECONDITION;
        case ErrorCode::Io: return EGO_ERR_IO;
        case ErrorCode::InvalidArgument: return EGO_ERR_INVALID_ARGUMENT;
    }
    return EGO_ERR_INTERNAL;
}

template <typename Fn>
ego_status guarded(Fn&& fn) {
    try {
        fn();
        t_last_error.clear();
        return EGO_OK;
    } catch (const ego::Error& e) {
        t_last_error = std::string(ego::error_code_name(e.code())) + ": " + e.what();
        return status_for(e.code());
    } catch (const std::exception& e) {
        t_last_error = std::string("internal: ") + e.what();
        return EGO_ERR_INTERNAL;
    } catch (...) {
        t_last_error = "internal: unknown exception";
        return EGO_ERR_INTERNAL;
    }
}

std::vector<ego::NodeId> nodes_from_json(const char* candidates_json) {
    std::vector<ego::NodeId> out;
    json doc = json::parse(candidates_json ? candidates_json : "[]");
    if (!doc.is_array()) {
        throw ego::Error(ego::ErrorCode::InvalidArgument,
                         "candidates must be a JSON array of strings");
    }
    for (const auto& item : doc) out.push_back(ego::NodeId::make(item.get<std::string>()));
    return out;
}

json parse_options(const char* options_json) {
    if (!options_json || !*options_json) return json::object();
    try {
        return json::parse(options_json);
    } catch (const std::exception& e) {
        throw ego::Error(ego::ErrorCode::InvalidArgument,
                         std::string("options are not valid JSON: ") + e.what());
    }
}

void require(const void* p, const char* what) {
    if (!p) throw ego::Error(ego::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

}  // namespace

struct ego_task {
    ego::TaskSpec spec;
    ego::RecordTable table;
    std::string config_path;
};

extern "C" {

const char* ego_version(void) { return "0.1.0"; }

const char* ego_last_error(void) { return t_last_error.c_str(); }

void ego_string_free(char* s) { std::free(s); }

ego_status ego_task_load(const char* config_path, ego_task** out) {
    return guarded([&] {
        require(config_path, "config_path");
        require(out, "out");
        auto [spec, table] = ego::load_task(config_path);
        *out = new ego_task{std::move(spec), std::move(table), config_path};
    });
}

void ego_task_free(ego_task* task) { delete task; }

ego_status ego_task_info(const ego_task* task, char** json_out) {
    return guarded([&] {
        require(task, "task");
        require(json_out, "json_out");
        *json_out = dup_string(ego::task_info(task->spec, task->table).dump(2));
    });
}

ego_status ego_init_task(const char* dir, char** config_path_out) {
    return guarded([&] {
        require(dir, "dir");
        std::string path = ego::init_task_scaffold(dir);
        if (config_path_out) *config_path_out = dup_string(path);
    });
}

ego_status ego_optimize(const ego_task* task, const char* options_json, char** summary_json_out) {
    return guarded([&] {
        require(task, "task");
        json summary =
            ego::run_optimize(task->spec, task->table, task->config_path,
                              parse_options(options_json));
        if (summary_json_out) *summary_json_out = dup_string(summary.dump(2));
    });
}

ego_status ego_evaluate(const ego_task* task, const char* options_json, char** metrics_json_out) {
    return guarded([&] {
        require(task, "task");
        json metrics = ego::run_evaluate(task->spec, task->table, parse_options(options_json));
        if (metrics_json_out) *metrics_json_out = dup_string(metrics.dump(2));
    });
}

ego_status ego_replay(const char* run_dir, const char* options_json, char** summary_json_out) {
    return guarded([&] {
        require(run_dir, "run_dir");
        json summary = ego::run_replay(run_dir, parse_options(options_json));
        if (summary_json_out) *summary_json_out = dup_string(summary.dump(2));
    });
}

ego_status ego_cost_report(const char* run_dir, char** report_json_out) {
    return guarded([&] {
        require(run_dir, "run_dir");
        require(report_json_out, "report_json_out");
        *report_json_out = dup_string(ego::cost_report_from_dir(run_dir).dump(2));
    });
}

ego_status ego_checkpoint_read(const char* path, char** json_out) {
    return guarded([&] {
        require(path, "path");
        require(json_out, "json_out");
        *json_out = dup_string(ego::Checkpoint::load(path).to_json().dump(2));
    });
}

ego_status ego_scg_parse(const char* text, const char* candidates_json, char** canonical_out) {
    return guarded([&] {
        require(text, "text");
        require(canonical_out, "canonical_out");
        ego::Scg g = ego::parse_scg(text, nodes_from_json(candidates_json));
        *canonical_out = dup_string(ego::render_scg(g));
    });
}

ego_status ego_scg_transform(const char* text, const char* candidates_json, const char* setting,
                             uint64_t seed, char** out_text) {
    return guarded([&] {
        require(text, "text");
        require(setting, "setting");
        require(out_text, "out_text");
        *out_text = dup_string(
            ego::apply_scg_setting(text, nodes_from_json(candidates_json), setting, seed));
    });
}

ego_status ego_scg_diff(const char* old_text, const char* new_text, const char* candidates_json,
                        char** report_out) {
    return guarded([&] {
        require(old_text, "old_text");
        require(new_text, "new_text");
        require(report_out, "report_out");
        auto candidates = nodes_from_json(candidates_json);
        ego::Scg old_g = ego::parse_scg(old_text, candidates);
        ego::Scg new_g = ego::parse_scg(new_text, candidates);
        ego::ScgDiff diff = ego::diff_scg(old_g, new_g);
        std::string report = ego::render_diff(diff);
        if (!diff.added_edges.empty() || !diff.removed_edges.empty()) {
            report += "\nedges:\n";
            for (const auto& e : diff.added_edges)
                report += "+ [" + e.source.label + "] -> [" + e.target.label + "]\n";
            for (const auto& e : diff.removed_edges)
                report += "- [" + e.source.label + "] -> [" + e.target.label + "]\n";
        }
        *report_out = dup_string(report);
    });
}

}  // extern "C"
