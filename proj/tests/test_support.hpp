#pragma once

// Shared helpers for the offline suites: temp dirs, scripted gateways,
// and the synthetic benchmark tasks the optimizer scenarios run against.

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "dataset.hpp"
#include "gateway.hpp"
#include "optimizer.hpp"
#include "pipeline.hpp"

namespace support {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& stem) {
        path = std::filesystem::temp_directory_path() /
               (stem + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name, const std::string& content) const {
        std::string p = (path / name).string();
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p;
    }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

inline ego::Gateway make_gateway(std::shared_ptr<ego::ScriptedBackend> scripted,
                                 ego::PriceTable forward_price = {},
                                 ego::PriceTable backward_price = {}) {
    ego::ModelSpec fwd;
    fwd.role = ego::ModelRole::Forward;
    fwd.model = "offline-forward";
    fwd.price = forward_price;
    ego::ModelSpec bwd;
    bwd.role = ego::ModelRole::Backward;
    bwd.model = "offline-backward";
    bwd.max_tokens = 2048;
    bwd.price = backward_price;
    return ego::Gateway(std::move(scripted), {fwd, bwd});
}

// A small workshop-incident task used by the pipeline and optimizer
// scenarios. Val split: 10 samples (5 low / 5 medium by gold); train: 6;
// test: 4. Splits are fixed explicitly so scenario scripts can reference
// ids directly.
struct Bench {
    ego::Task task;
    std::string planted_statement =
        "Causal Statement 3: [Surface Condition] affects [Incident Severity].\n"
        "Slick surfaces escalate otherwise minor events.";

    Bench() {
        ego::TaskSpec& spec = task.spec;
        spec.name = "bench";
        spec.labels = {"low", "medium", "high"};
        spec.description_tag = "Incident Description";
        spec.template_text =
            "[Surface Condition] The floor was {surface}.\n"
            "[Cargo Load] The crew moved {cargo}.\n"
            "[Operator Fatigue] The operator was {fatigue}.";
        spec.candidate_nodes = {ego::NodeId::make("Surface Condition"),
                                ego::NodeId::make("Cargo Load"),
                                ego::NodeId::make("Operator Fatigue")};
        spec.target_node = ego::NodeId::make("Incident Severity");
        spec.initial_scg_text =
            "Causal Statement 1: [Cargo Load] affects [Incident Severity].\n"
            "Heavier cargo raises the stakes of any slip.\n\n"
            "Causal Statement 2: [Operator Fatigue] affects [Incident Severity].\n"
            "Tired operators react late.";
        spec.system_prompt = "Assess the incident and assign a severity label. marker-v0";
        spec.causal_system_prompt =
            "Relate the causal statements to the specifics of this incident.";
        spec.output_format =
            "The last line of your response must be exactly <VALUE>, where VALUE is one of: "
            "low, medium, high.";

        auto add_row = [&](const std::string& id, const std::string& gold) {
            ego::Record r;
            r.id = id;
            r.gold = gold;
            r.fields = {{"surface", "wet near bay " + id},
                        {"cargo", "a standard pallet " + id},
                        {"fatigue", "on a long shift " + id}};
            task.table.rows.push_back(std::move(r));
        };
        for (int i = 1; i <= 10; ++i) {
            std::string id = "v" + std::to_string(i);
            add_row(id, i <= 5 ? "low" : "medium");
            task.split.val.push_back(id);
        }
        for (int i = 1; i <= 6; ++i) {
            std::string id = "t" + std::to_string(i);
            add_row(id, i % 2 ? "low" : "high");
            task.split.train.push_back(id);
        }
        for (int i = 1; i <= 4; ++i) {
            std::string id = "w" + std::to_string(i);
            add_row(id, i % 2 ? "medium" : "low");
            task.split.test.push_back(id);
        }
    }

    // Baseline validation predictions scoring weighted F1 = accuracy = 0.40:
    // of 5 low golds predict low,low,medium,medium,medium; of 5 medium
    // golds predict medium,medium,low,low,low.
    std::string baseline_prediction(const std::string& id) const {
        int n = std::stoi(id.substr(1));
        if (id[0] == 'v') {
            if (n <= 2) return "low";
            if (n <= 5) return "medium";
            if (n <= 7) return "medium";
            return "low";
        }
        if (id[0] == 'w') return "medium";
        return "low";  // train rows: wrong for even ids (gold high)
    }

    std::string gold(const std::string& id) const { return task.table.by_id(id).gold; }

    std::vector<std::string> all_ids() const { return task.table.ids(); }
};

// Validation predictions with weighted F1 0.6: three of each five-gold
// block right, two crossed.
inline std::string pattern06(const support::Bench& bench, const std::string& id) {
    if (id[0] != 'v') return bench.gold(id);
    int n = std::stoi(id.substr(1));
    if (n <= 3) return "low";
    if (n <= 5) return "medium";
    if (n <= 8) return "medium";
    return "low";
}

// Clearly worse than baseline: one low and two medium right.
inline std::string pattern03(const support::Bench& bench, const std::string& id) {
    if (id[0] != 'v') return bench.gold(id);
    int n = std::stoi(id.substr(1));
    if (n == 1) return "low";
    if (n <= 5) return "medium";
    if (n <= 7) return "medium";
    return "low";
}

inline std::string guidance_block(const std::string& note) {
    return "<Causal Description>\n1. " + note + "\n</Causal Description>";
}

// Scenario: the initial graph lacks the one statement that makes guidance
// useful; the backward engine proposes it (among distractor suggestions);
// Stage 2 commits it and validation jumps from 0.40 to 1.0. Stage-1
// candidates change wording but not behavior, so their score ties and the
// strict gate rejects them.
struct ScriptUsage {
    long forward_in = 0;
    long forward_out = 0;
    long backward_in = 0;
    long backward_out = 0;
};

inline std::shared_ptr<ego::ScriptedBackend> planted_script(const Bench& bench,
                                                            ScriptUsage usage = {}) {
    auto s = std::make_shared<ego::ScriptedBackend>();
    const std::string planted_marker = "[Surface Condition] affects [Incident Severity]";
    for (const auto& id : bench.all_ids()) {
        s->add_tag("guidance::" + id, guidance_block("cargo and fatigue considered (baseline)"),
                   {}, usage.forward_in, usage.forward_out);
        s->add_tag("guidance::" + id, guidance_block("slick flooring dominates here (surface-aware)"),
                   {planted_marker}, usage.forward_in, usage.forward_out);
        s->add_tag("predict::" + id, "baseline view.\n<" + bench.baseline_prediction(id) + ">",
                   {}, usage.forward_in, usage.forward_out);
        s->add_tag("predict::" + id, "surface-aware view.\n<" + bench.gold(id) + ">",
                   {"(surface-aware)"}, usage.forward_in, usage.forward_out);
        s->add_tag("gradout::" + id, "The prediction overlooked floor-surface effects.", {},
                   usage.backward_in, usage.backward_out);
        s->add_tag("gradvar::system_prompt::" + id, "Consider clarifying the instruction. (sys-fb)",
                   {}, usage.backward_in, usage.backward_out);
        s->add_tag("gradvar::causal_system_prompt::" + id, "no change needed", {},
                   usage.backward_in, usage.backward_out);
        s->add_tag("gradvar::scg::" + id,
                   "Add a statement linking surface conditions to incident severity; weaker "
                   "alternatives considered: shift timing, cargo route. (scg-fb)",
                   {}, usage.backward_in, usage.backward_out);
    }
    s->add_tag("apply::system_prompt",
               "<REVISED>Assess the incident carefully and assign a severity label. "
               "marker-v0</REVISED>",
               {}, usage.backward_in, usage.backward_out);
    s->add_tag("apply::scg",
               "<REVISED>Causal Statement 1: [Cargo Load] affects [Incident Severity].\n"
               "Heavier cargo raises the stakes of any slip.\n\n"
               "Causal Statement 2: [Operator Fatigue] affects [Incident Severity].\n"
               "Tired operators react late.\n\n" +
                   bench.planted_statement + "</REVISED>",
               {}, usage.backward_in, usage.backward_out);
    return s;
}

// Writes the bench task as a real on-disk task directory so file-driven
// paths (C API, replay) can load it. Splits then come from balanced_split
// rather than the fixed ids above.
inline std::string write_bench_task(const Bench& bench, const TempDir& dir) {
    nlohmann::json task{
        {"version", 1},
        {"name", bench.task.spec.name},
        {"labels", bench.task.spec.labels},
        {"description_tag", bench.task.spec.description_tag},
        {"target_node", bench.task.spec.target_node.label},
        {"template", bench.task.spec.template_text},
        {"initial_scg", bench.task.spec.initial_scg_text},
        {"system_prompt", bench.task.spec.system_prompt},
        {"causal_system_prompt", bench.task.spec.causal_system_prompt},
        {"output_format", bench.task.spec.output_format},
        {"data", "data.csv"},
    };
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : bench.task.spec.candidate_nodes) nodes.push_back(n.label);
    task["candidate_nodes"] = nodes;

    std::string csv = "id,label,surface,cargo,fatigue\n";
    for (const auto& row : bench.task.table.rows) {
        csv += row.id + "," + row.gold + "," + row.fields.at("surface") + "," +
               row.fields.at("cargo") + "," + row.fields.at("fatigue") + "\n";
    }
    dir.file("data.csv", csv);
    return dir.file("task.json", task.dump(2));
}

// Scenario with predetermined candidate quality: Stage 1 first improves
// (0.4 -> 0.6), then proposes a strictly worse wording every later step;
// Stage 2's graph candidate ties the committed score every step. Together
// the log shows accept, reject-worse, and reject-equal outcomes.
inline std::shared_ptr<ego::ScriptedBackend> gating_script(const Bench& bench) {
    auto s = std::make_shared<ego::ScriptedBackend>();
    for (const auto& id : bench.all_ids()) {
        s->add_tag("guidance::" + id, guidance_block("general guidance"));
        s->add_tag("predict::" + id, "<" + bench.baseline_prediction(id) + ">", {"marker-v0"});
        s->add_tag("predict::" + id, "<" + pattern06(bench, id) + ">", {"marker-v1"});
        s->add_tag("predict::" + id, "<" + pattern03(bench, id) + ">", {"marker-v2"});
        s->add_tag("gradout::" + id, "Weigh the evidence differently.");
        s->add_tag("gradvar::system_prompt::" + id, "Reword the instruction. (sys-fb)");
        s->add_tag("gradvar::causal_system_prompt::" + id, "no change needed");
        s->add_tag("gradvar::scg::" + id, "Mention the floor surface explicitly. (scg-fb)");
    }
    s->add_tag("apply::system_prompt",
               "<REVISED>Assess the incident and label severity. marker-v1</REVISED>",
               {"marker-v0"});
    s->add_tag("apply::system_prompt",
               "<REVISED>Assess the incident and label severity. marker-v2</REVISED>",
               {"marker-v1"});
    s->add_tag("apply::scg",
               "<REVISED>Causal Statement 1: [Cargo Load] affects [Incident Severity].\n"
               "Heavier cargo raises the stakes of any slip.\n\n"
               "Causal Statement 2: [Surface Condition] affects [Incident Severity].\n"
               "Slick floors change outcomes.</REVISED>");
    return s;
}

}  // namespace support
