#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "scg.hpp"

namespace ego {

/// The templated textual rendering of one data record, wrapped in the
/// task's description delimiters.
struct OrganizedPrompt {
    std::string sample_id;
    std::string text;
    std::string gold;
};

/// Everything that defines one domain task: labels, prompt template,
/// SCG vocabulary, initial prompts and graph. Loaded from a single
/// human-editable JSON config plus a CSV/JSONL data file.
struct TaskSpec {
    std::string name;
    std::vector<std::string> labels;           // ordered as configured
    std::string id_field = "id";
    std::string label_field = "label";
    std::string description_tag;               // e.g. "Case Description"
    std::string template_text;
    std::vector<NodeId> candidate_nodes;       // == template block names
    NodeId target_node;                        // prediction target; SCG-only node
    std::string initial_scg_text;
    std::string system_prompt;
    std::string causal_system_prompt;
    std::string output_format;                 // fixed clause, never optimized

    /// candidate_nodes plus the target node: the SCG vocabulary.
    std::vector<NodeId> scg_vocabulary() const;
};

struct Record {
    std::string id;
    std::string gold;
    std::map<std::string, std::string> fields;
};

struct RecordTable {
    std::vector<Record> rows;  // original file order
    const Record& by_id(const std::string& id) const;
    std::vector<std::string> ids() const;
};

struct Split {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
    bool proportional_fallback = false;
    std::string warning;  // set when fallback triggered
    std::map<std::string, int> val_label_counts;
    std::map<std::string, int> test_label_counts;
};

/// Fills the template's {field} slots from the row and wraps the result in
/// the task's description delimiters. Missing fields raise MissingField;
/// present-but-empty values render verbatim.
OrganizedPrompt render_prompt(const TaskSpec& spec, const Record& row);

/// Equal per-label quotas for val and test (remainder to the largest
/// classes, deterministically); proportional fallback with a warning when
/// a class is too small; InsufficientData when even that cannot fit.
Split balanced_split(const RecordTable& table, const std::vector<std::string>& labels, int val_n,
                     int test_n, std::uint64_t seed);

/// Loads and validates task config + data file. ConfigError carries
/// field-level diagnostics.
std::pair<TaskSpec, RecordTable> load_task(const std::string& config_path);

/// Block names ("[Name]" headers) in template order.
std::vector<std::string> template_block_names(const std::string& template_text);

}  // namespace ego
