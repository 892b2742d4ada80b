#include "dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

#include "error.hpp"
#include "util.hpp"

namespace ego {

namespace {

std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::vector<std::map<std::string, std::string>> load_csv(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::Config, "empty data file: " + path);
    auto header = parse_csv_line(line);
    std::vector<std::map<std::string, std::string>> rows;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto fields = parse_csv_line(line);
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::Config,
                        path + ": row " + std::to_string(rows.size() + 2) + " has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(header.size()));
        }
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size(); ++i) row[trim(header[i])] = fields[i];
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::map<std::string, std::string>> load_jsonl(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::vector<std::map<std::string, std::string>> rows;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw Error(ErrorCode::Config,
                        path + ":" + std::to_string(line_no) + ": bad JSON: " + e.what());
        }
        std::map<std::string, std::string> row;
        for (auto it = doc.begin(); it != doc.end(); ++it) {
            if (it.value().is_string()) {
                row[it.key()] = it.value().get<std::string>();
            } else {
                row[it.key()] = it.value().dump();
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// Largest-remainder quotas proportional to class sizes, capped by
// availability.
std::map<std::string, int> proportional_quotas(const std::vector<std::string>& labels,
                                               const std::map<std::string, int>& available,
                                               int want) {
    int total = 0;
    for (const auto& l : labels) total += available.at(l);
    std::map<std::string, int> quota;
    std::vector<std::pair<double, std::string>> remainders;
    int assigned = 0;
    for (const auto& l : labels) {
        double exact = static_cast<double>(want) * available.at(l) / total;
        int base = static_cast<int>(exact);
        quota[l] = base;
        assigned += base;
        remainders.emplace_back(exact - base, l);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (auto& [rem, l] : remainders) {
        if (assigned >= want) break;
        quota[l] += 1;
        ++assigned;
    }
    // Cap at availability, redistribute greedily to classes with room.
    int overflow = 0;
    for (const auto& l : labels) {
        if (quota[l] > available.at(l)) {
            overflow += quota[l] - available.at(l);
            quota[l] = available.at(l);
        }
    }
    while (overflow > 0) {
        bool placed = false;
        for (const auto& l : labels) {
            if (overflow == 0) break;
            if (quota[l] < available.at(l)) {
                quota[l] += 1;
                --overflow;
                placed = true;
            }
        }
        if (!placed) throw Error(ErrorCode::InsufficientData, "not enough rows for requested split");
    }
    return quota;
}

}  // namespace

std::vector<NodeId> TaskSpec::scg_vocabulary() const {
    std::vector<NodeId> vocab = candidate_nodes;
    if (std::find(vocab.begin(), vocab.end(), target_node) == vocab.end()) {
        vocab.push_back(target_node);
    }
    return vocab;
}

const Record& RecordTable::by_id(const std::string& id) const {
    for (const auto& r : rows) {
        if (r.id == id) return r;
    }
    throw Error(ErrorCode::InvalidArgument, "no record with id " + id);
}

std::vector<std::string> RecordTable::ids() const {
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.id);
    return out;
}

std::vector<std::string> template_block_names(const std::string& template_text) {
    std::vector<std::string> names;
    for (const auto& line : split_lines(template_text)) {
        std::string t = trim(line);
        if (t.size() < 2 || t[0] != '[') continue;
        auto close = t.find(']');
        if (close == std::string::npos) continue;
        std::string name = trim(std::string_view(t).substr(1, close - 1));
        if (!name.empty() && std::find(names.begin(), names.end(), name) == names.end()) {
            names.push_back(name);
        }
    }
    return names;
}

OrganizedPrompt render_prompt(const TaskSpec& spec, const Record& row) {
    std::string filled;
    const std::string& tpl = spec.template_text;
    std::size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] == '{') {
            auto close = tpl.find('}', i);
            if (close == std::string::npos) {
                throw Error(ErrorCode::Config, "unterminated {field} slot in template");
            }
            std::string field = trim(std::string_view(tpl).substr(i + 1, close - i - 1));
            auto it = row.fields.find(field);
            if (it == row.fields.end()) {
                throw Error(ErrorCode::MissingField,
                            "record " + row.id + " is missing field '" + field + "'");
            }
            // Value substituted verbatim; explicit missing markers like
            // "nan" in the source data appear as-is.
            filled += it->second;
            i = close + 1;
        } else {
            filled.push_back(tpl[i]);
            ++i;
        }
    }
    OrganizedPrompt out;
    out.sample_id = row.id;
    out.gold = row.gold;
    out.text = "<" + spec.description_tag + ">\n" + trim(filled) + "\n</" + spec.description_tag +
               ">";
    return out;
}

Split balanced_split(const RecordTable& table, const std::vector<std::string>& labels, int val_n,
                     int test_n, std::uint64_t seed) {
    if (val_n < 0 || test_n < 0) {
        throw Error(ErrorCode::InvalidArgument, "split sizes must be non-negative");
    }
    if (static_cast<std::size_t>(val_n + test_n) > table.rows.size()) {
        throw Error(ErrorCode::InsufficientData,
                    "dataset has " + std::to_string(table.rows.size()) + " rows, need " +
                        std::to_string(val_n + test_n));
    }

    std::map<std::string, std::vector<std::string>> by_label;
    for (const auto& l : labels) by_label[l];
    for (const auto& r : table.rows) {
        auto it = by_label.find(r.gold);
        if (it == by_label.end()) {
            throw Error(ErrorCode::Config, "record " + r.id + " has unknown label: " + r.gold);
        }
        it->second.push_back(r.id);
    }
    std::map<std::string, int> available;
    for (const auto& l : labels) available[l] = static_cast<int>(by_label[l].size());

    const int n_labels = static_cast<int>(labels.size());
    auto equal_quota = [&](int want) {
        std::map<std::string, int> quota;
        int base = want / n_labels;
        int remainder = want % n_labels;
        for (const auto& l : labels) quota[l] = base;
        // Remainder goes to the largest classes; ties broken by label order.
        std::vector<std::string> order(labels);
        std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
            return available.at(a) > available.at(b);
        });
        for (int i = 0; i < remainder; ++i) quota[order[static_cast<std::size_t>(i)]] += 1;
        return quota;
    };

    Split split;
    split.seed = seed;
    auto val_quota = equal_quota(val_n);
    auto test_quota = equal_quota(test_n);
    bool feasible = true;
    for (const auto& l : labels) {
        if (available[l] < val_quota[l] + test_quota[l]) {
            feasible = false;
            break;
        }
    }
    if (!feasible) {
        split.proportional_fallback = true;
        split.warning =
            "equal per-label quotas infeasible; falling back to proportional allocation";
        // Apportion val and test jointly, then split each class's share.
        auto joint = proportional_quotas(labels, available, val_n + test_n);
        std::map<std::string, int> joint_avail;
        for (const auto& l : labels) joint_avail[l] = joint[l];
        val_quota = proportional_quotas(labels, joint_avail, val_n);
        for (const auto& l : labels) test_quota[l] = joint[l] - val_quota[l];
    }

    for (std::size_t li = 0; li < labels.size(); ++li) {
        const auto& label = labels[li];
        auto& pool = by_label[label];
        auto perm = seeded_permutation(pool.size(), seed ^ fnv1a(label));
        int vq = val_quota[label];
        int tq = test_quota[label];
        for (std::size_t k = 0; k < pool.size(); ++k) {
            const auto& id = pool[perm[k]];
            if (static_cast<int>(k) < vq) {
                split.val.push_back(id);
            } else if (static_cast<int>(k) < vq + tq) {
                split.test.push_back(id);
            } else {
                split.train.push_back(id);
            }
        }
        split.val_label_counts[label] = vq;
        split.test_label_counts[label] = tq;
    }
    // Keep file order within each split for readability and determinism.
    auto file_order = [&](std::vector<std::string>& ids) {
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < table.rows.size(); ++i) pos[table.rows[i].id] = i;
        std::sort(ids.begin(), ids.end(),
                  [&](const auto& a, const auto& b) { return pos[a] < pos[b]; });
    };
    file_order(split.train);
    file_order(split.val);
    file_order(split.test);
    return split;
}

std::pair<TaskSpec, RecordTable> load_task(const std::string& config_path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(config_path));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::Config, config_path + ": bad JSON: " + e.what());
    }

    auto need = [&](const char* field) -> const nlohmann::json& {
        if (!doc.contains(field)) {
            throw Error(ErrorCode::Config, config_path + ": missing required field '" +
                                               std::string(field) + "'");
        }
        return doc[field];
    };

    TaskSpec spec;
    spec.name = need("name").get<std::string>();
    for (const auto& l : need("labels")) spec.labels.push_back(l.get<std::string>());
    spec.id_field = doc.value("id_field", std::string("id"));
    spec.label_field = doc.value("label_field", std::string("label"));
    spec.description_tag = need("description_tag").get<std::string>();
    spec.template_text = need("template").get<std::string>();
    spec.target_node = NodeId::make(need("target_node").get<std::string>());
    for (const auto& n : need("candidate_nodes"))
        spec.candidate_nodes.push_back(NodeId::make(n.get<std::string>()));
    spec.initial_scg_text = doc.value("initial_scg", std::string());
    spec.system_prompt = need("system_prompt").get<std::string>();
    spec.causal_system_prompt = need("causal_system_prompt").get<std::string>();
    spec.output_format = need("output_format").get<std::string>();

    if (spec.labels.empty()) throw Error(ErrorCode::Config, "label set is empty");
    // Labels must stay distinguishable after normalization, and none may be
    // a substring of another or last-token parsing becomes ambiguous.
    std::vector<std::string> normalized;
    for (const auto& l : spec.labels) normalized.push_back(normalize_label(l));
    for (std::size_t i = 0; i < normalized.size(); ++i) {
        for (std::size_t j = 0; j < normalized.size(); ++j) {
            if (i == j) continue;
            if (normalized[i] == normalized[j]) {
                throw Error(ErrorCode::Config,
                            "labels '" + spec.labels[i] + "' and '" + spec.labels[j] +
                                "' are duplicates after normalization");
            }
            if (normalized[j].find(normalized[i]) != std::string::npos) {
                throw Error(ErrorCode::Config, "label '" + spec.labels[i] +
                                                   "' is a substring of '" + spec.labels[j] + "'");
            }
        }
    }

    auto blocks = template_block_names(spec.template_text);
    std::set<std::string> block_set(blocks.begin(), blocks.end());
    for (const auto& n : spec.candidate_nodes) {
        if (!block_set.count(n.label)) {
            throw Error(ErrorCode::Config,
                        "candidate node [" + n.label + "] does not name a template block");
        }
    }
    std::set<std::string> cand_set;
    for (const auto& n : spec.candidate_nodes) cand_set.insert(n.label);
    for (const auto& b : blocks) {
        if (!cand_set.count(b)) {
            throw Error(ErrorCode::Config,
                        "template block [" + b + "] is missing from candidate_nodes");
        }
    }
    if (cand_set.count(spec.target_node.label)) {
        throw Error(ErrorCode::Config,
                    "target_node [" + spec.target_node.label + "] must not be a template block");
    }

    // Validate the initial SCG against the task vocabulary.
    parse_scg(spec.initial_scg_text, spec.scg_vocabulary());

    std::string data_rel = need("data").get<std::string>();
    std::filesystem::path data_path =
        std::filesystem::path(config_path).parent_path() / data_rel;
    std::vector<std::map<std::string, std::string>> raw;
    if (data_path.extension() == ".csv") {
        raw = load_csv(data_path.string());
    } else if (data_path.extension() == ".jsonl") {
        raw = load_jsonl(data_path.string());
    } else {
        throw Error(ErrorCode::Config, "data file must be .csv or .jsonl: " + data_path.string());
    }

    // Every {field} slot must exist in the data.
    std::set<std::string> slots;
    const std::string& tpl = spec.template_text;
    for (std::size_t i = 0; i < tpl.size(); ++i) {
        if (tpl[i] != '{') continue;
        auto close = tpl.find('}', i);
        if (close == std::string::npos)
            throw Error(ErrorCode::Config, "unterminated {field} slot in template");
        slots.insert(trim(std::string_view(tpl).substr(i + 1, close - i - 1)));
        i = close;
    }

    RecordTable table;
    std::set<std::string> seen_ids;
    std::set<std::string> label_set(spec.labels.begin(), spec.labels.end());
    for (std::size_t r = 0; r < raw.size(); ++r) {
        auto& row = raw[r];
        auto where = [&] { return "row " + std::to_string(r + 1); };
        if (!row.count(spec.id_field)) {
            throw Error(ErrorCode::Config, where() + ": missing id field '" + spec.id_field + "'");
        }
        if (!row.count(spec.label_field)) {
            throw Error(ErrorCode::Config,
                        where() + ": missing label field '" + spec.label_field + "'");
        }
        Record rec;
        rec.id = row[spec.id_field];
        rec.gold = row[spec.label_field];
        if (!label_set.count(rec.gold)) {
            throw Error(ErrorCode::Config,
                        where() + ": label '" + rec.gold + "' not in the task label set");
        }
        if (!seen_ids.insert(rec.id).second) {
            throw Error(ErrorCode::Config, where() + ": duplicate id '" + rec.id + "'");
        }
        for (const auto& slot : slots) {
            if (!row.count(slot)) {
                throw Error(ErrorCode::Config,
                            where() + ": missing template field '" + slot + "'");
            }
        }
        rec.fields = std::move(row);
        table.rows.push_back(std::move(rec));
    }
    return {spec, table};
}

}  // namespace ego
