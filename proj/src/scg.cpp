#include "scg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "error.hpp"
#include "util.hpp"

namespace ego {

namespace {

bool is_blank(std::string_view line) { return trim(line).empty(); }

// "Causal Statement 3:" or a bare "3." / "3:" / "3)" list prefix.
// Returns the header remainder, or nullopt if the line is not a header.
std::optional<std::string> match_statement_header(const std::string& line) {
    std::string t = trim(line);
    std::size_t pos = 0;
    std::string lowered = to_lower(t);
    if (starts_with(lowered, "causal statement")) {
        pos = std::string("causal statement").size();
    }
    std::size_t digits_start = pos;
    while (digits_start < t.size() && std::isspace(static_cast<unsigned char>(t[digits_start])))
        ++digits_start;
    std::size_t digits_end = digits_start;
    while (digits_end < t.size() && std::isdigit(static_cast<unsigned char>(t[digits_end])))
        ++digits_end;
    if (digits_end == digits_start) return std::nullopt;
    if (digits_end >= t.size()) return std::nullopt;
    char sep = t[digits_end];
    if (sep != ':' && sep != '.' && sep != ')') return std::nullopt;
    std::string rest = trim(std::string_view(t).substr(digits_end + 1));
    // A header must actually introduce a relation.
    if (rest.find('[') == std::string::npos) return std::nullopt;
    return rest;
}

bool is_connective_word(const std::string& w) {
    return w == "and" || w == "," || w.empty();
}

// Relation verbs the wild emits; canonical render always says "affects".
bool is_relation_verb(const std::string& w) {
    return w == "affects" || w == "affect" || w == "determines" || w == "determine";
}

std::vector<NodeId> dedupe_nodes(const std::vector<NodeId>& in) {
    std::vector<NodeId> out;
    for (const auto& n : in) {
        if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    }
    return out;
}

std::string join_nodes(const std::vector<NodeId>& nodes) {
    std::string out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (i > 0) out += " and ";
        out += "[" + nodes[i].label + "]";
    }
    return out;
}

struct ParsedHeader {
    std::vector<NodeId> sources;
    std::vector<NodeId> targets;
};

// Splits "[A] and [B] affects [C], [D]." into sources/targets by locating
// the relation verb between bracketed tokens. Node labels may themselves
// contain "and", so only text outside brackets is inspected.
ParsedHeader parse_header_relation(const std::string& rest, int stmt_no) {
    ParsedHeader out;
    bool seen_verb = false;
    std::size_t i = 0;
    auto fail = [&](const std::string& why) -> void {
        throw Error(ErrorCode::Syntax,
                    "statement " + std::to_string(stmt_no) + ": " + why + ": " + rest);
    };
    while (i < rest.size()) {
        if (rest[i] == '[') {
            std::size_t close = rest.find(']', i);
            if (close == std::string::npos) fail("unterminated node reference");
            std::string label = trim(std::string_view(rest).substr(i + 1, close - i - 1));
            if (label.empty()) fail("empty node reference");
            NodeId node = NodeId::make(label);
            (seen_verb ? out.targets : out.sources).push_back(node);
            i = close + 1;
        } else {
            // Collect a connective/verb chunk up to the next bracket.
            std::size_t next = rest.find('[', i);
            std::string between = rest.substr(i, next == std::string::npos ? std::string::npos
                                                                           : next - i);
            std::istringstream words(between);
            std::string w;
            while (words >> w) {
                // strip punctuation around the word
                while (!w.empty() && (w.back() == '.' || w.back() == ',')) w.pop_back();
                std::string lw = to_lower(w);
                if (lw.empty()) continue;
                if (is_relation_verb(lw)) {
                    if (seen_verb) fail("multiple relation verbs");
                    if (out.sources.empty()) fail("relation verb before any source node");
                    seen_verb = true;
                } else if (!is_connective_word(lw)) {
                    fail("unexpected token '" + w + "'");
                }
            }
            if (next == std::string::npos) break;
            i = next;
        }
    }
    if (!seen_verb) fail("missing relation verb");
    if (out.sources.empty() || out.targets.empty()) fail("statement needs sources and targets");
    return out;
}

void check_description(const std::string& description) {
    auto lines = split_lines(description);
    bool any = false;
    for (const auto& line : lines) {
        if (is_blank(line)) {
            throw Error(ErrorCode::InvalidArgument,
                        "statement description cannot contain blank lines");
        }
        if (match_statement_header(line)) {
            throw Error(ErrorCode::InvalidArgument,
                        "statement description line would parse as a statement header: " + line);
        }
        any = true;
    }
    if (!any) {
        throw Error(ErrorCode::InvalidArgument, "statement description must be non-empty");
    }
}

}  // namespace

NodeId NodeId::make(std::string_view raw) {
    std::string label = trim(raw);
    if (label.empty()) throw Error(ErrorCode::InvalidArgument, "node label is empty");
    if (label.find('[') != std::string::npos || label.find(']') != std::string::npos ||
        label.find('\n') != std::string::npos) {
        throw Error(ErrorCode::InvalidArgument,
                    "node label contains brackets or newline: " + label);
    }
    return NodeId{std::move(label)};
}

CausalStatement CausalStatement::make(std::vector<NodeId> sources, std::vector<NodeId> targets,
                                      std::string description, int index) {
    CausalStatement s;
    s.index = index;
    s.sources = dedupe_nodes(sources);
    s.targets = dedupe_nodes(targets);
    s.description = trim(normalize_newlines(description));
    if (s.sources.empty()) throw Error(ErrorCode::InvalidArgument, "statement has no sources");
    if (s.targets.empty()) throw Error(ErrorCode::InvalidArgument, "statement has no targets");
    for (const auto& src : s.sources) {
        for (const auto& tgt : s.targets) {
            if (src == tgt) {
                throw Error(ErrorCode::Cycle,
                            "self-loop on [" + src.label + "] within one statement");
            }
        }
    }
    check_description(s.description);
    return s;
}

std::string CausalStatement::key() const {
    std::string k;
    for (const auto& n : sources) k += "[" + n.label + "]";
    k += "->";
    for (const auto& n : targets) k += "[" + n.label + "]";
    return k;
}

std::string CausalStatement::relation_text() const {
    return join_nodes(sources) + " affects " + join_nodes(targets) + ".";
}

bool CausalStatement::same_relation(const CausalStatement& o) const {
    return sources == o.sources && targets == o.targets;
}

bool CausalStatement::operator==(const CausalStatement& o) const {
    return same_relation(o) && description == o.description;
}

Scg Scg::make(std::vector<CausalStatement> statements, std::vector<NodeId> candidates) {
    Scg g;
    g.candidates_ = dedupe_nodes(candidates);

    std::set<std::string> vocabulary;
    for (const auto& n : g.candidates_) vocabulary.insert(n.label);

    for (auto& s : statements) {
        for (const auto& n : s.sources) {
            if (!vocabulary.count(n.label))
                throw Error(ErrorCode::UnknownNode, "node not in candidate set: [" + n.label + "]");
        }
        for (const auto& n : s.targets) {
            if (!vocabulary.count(n.label))
                throw Error(ErrorCode::UnknownNode, "node not in candidate set: [" + n.label + "]");
        }
    }

    // Kahn's algorithm over the induced edge set.
    std::map<std::string, std::set<std::string>> adj;
    std::map<std::string, int> indegree;
    for (const auto& n : vocabulary) indegree[n] = 0;
    for (const auto& s : statements) {
        for (const auto& src : s.sources) {
            for (const auto& tgt : s.targets) {
                if (src == tgt)
                    throw Error(ErrorCode::Cycle, "self-loop on [" + src.label + "]");
                if (adj[src.label].insert(tgt.label).second) indegree[tgt.label] += 1;
            }
        }
    }
    std::vector<std::string> ready;
    for (const auto& [n, d] : indegree)
        if (d == 0) ready.push_back(n);
    std::size_t visited = 0;
    while (!ready.empty()) {
        std::string n = ready.back();
        ready.pop_back();
        ++visited;
        for (const auto& m : adj[n]) {
            if (--indegree[m] == 0) ready.push_back(m);
        }
    }
    if (visited != indegree.size()) {
        throw Error(ErrorCode::Cycle, "causal statements induce a directed cycle");
    }

    for (std::size_t i = 0; i < statements.size(); ++i)
        statements[i].index = static_cast<int>(i) + 1;
    g.statements_ = std::move(statements);
    return g;
}

std::vector<Edge> Scg::edges() const {
    std::vector<Edge> out;
    for (const auto& s : statements_) {
        for (const auto& src : s.sources) {
            for (const auto& tgt : s.targets) {
                out.push_back(Edge{src, tgt});
            }
        }
    }
    return out;
}

bool Scg::operator==(const Scg& o) const {
    if (statements_ != o.statements_) return false;
    auto a = candidates_;
    auto b = o.candidates_;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

Scg parse_scg(std::string_view text, const std::vector<NodeId>& candidates) {
    std::vector<CausalStatement> statements;
    auto lines = split_lines(normalize_newlines(text));

    std::size_t i = 0;
    int stmt_no = 0;
    while (i < lines.size()) {
        if (is_blank(lines[i])) {
            ++i;
            continue;
        }
        auto header = match_statement_header(lines[i]);
        if (!header) {
            throw Error(ErrorCode::Syntax, "expected a causal-statement header, got: " + lines[i]);
        }
        ++stmt_no;
        ParsedHeader rel = parse_header_relation(*header, stmt_no);
        ++i;
        std::vector<std::string> desc_lines;
        while (i < lines.size() && !is_blank(lines[i]) && !match_statement_header(lines[i])) {
            desc_lines.push_back(trim(lines[i]));
            ++i;
        }
        if (desc_lines.empty()) {
            throw Error(ErrorCode::Syntax,
                        "statement " + std::to_string(stmt_no) + " has no description");
        }
        std::string desc;
        for (std::size_t k = 0; k < desc_lines.size(); ++k) {
            if (k > 0) desc += "\n";
            desc += desc_lines[k];
        }
        statements.push_back(CausalStatement::make(rel.sources, rel.targets, desc, stmt_no));
    }
    return Scg::make(std::move(statements), candidates);
}

std::string render_scg(const Scg& g) {
    std::string out;
    for (std::size_t i = 0; i < g.statements().size(); ++i) {
        const auto& s = g.statements()[i];
        if (i > 0) out += "\n";
        out += "Causal Statement " + std::to_string(s.index) + ": " + s.relation_text() + "\n";
        out += s.description + "\n";
    }
    return out;
}

Scg apply_edit(const Scg& g, const ScgEdit& e) {
    std::vector<CausalStatement> statements = g.statements();

    auto locate = [&](int index) -> std::size_t {
        if (index < 1 || static_cast<std::size_t>(index) > statements.size()) {
            throw Error(ErrorCode::Index, "no statement with index " + std::to_string(index));
        }
        return static_cast<std::size_t>(index) - 1;
    };

    if (const auto* add = std::get_if<AddStatement>(&e)) {
        // Re-validated so aggregate-built payloads cannot skip invariants.
        statements.push_back(CausalStatement::make(add->statement.sources, add->statement.targets,
                                                   add->statement.description));
    } else if (const auto* del = std::get_if<DeleteStatement>(&e)) {
        statements.erase(statements.begin() + static_cast<std::ptrdiff_t>(locate(del->index)));
    } else if (const auto* edit = std::get_if<EditStatement>(&e)) {
        std::size_t at = locate(edit->index);
        statements[at] =
            CausalStatement::make(edit->sources, edit->targets, edit->description, edit->index);
    }
    return Scg::make(std::move(statements), g.candidates());
}

ScgDiff diff_scg(const Scg& old_g, const Scg& new_g) {
    ScgDiff d;
    const auto& olds = old_g.statements();
    const auto& news = new_g.statements();
    std::vector<bool> old_used(olds.size(), false);
    std::vector<bool> new_used(news.size(), false);

    // Pass 1: match by (sources, targets) key, in order.
    for (std::size_t i = 0; i < olds.size(); ++i) {
        for (std::size_t j = 0; j < news.size(); ++j) {
            if (new_used[j]) continue;
            if (olds[i].same_relation(news[j])) {
                old_used[i] = true;
                new_used[j] = true;
                if (olds[i].description != news[j].description) {
                    d.modified.emplace_back(olds[i], news[j]);
                }
                break;
            }
        }
    }
    // Pass 2: unmatched statements sharing an index are treated as edits.
    for (std::size_t i = 0; i < olds.size(); ++i) {
        if (old_used[i]) continue;
        for (std::size_t j = 0; j < news.size(); ++j) {
            if (new_used[j]) continue;
            if (olds[i].index == news[j].index) {
                old_used[i] = true;
                new_used[j] = true;
                d.modified.emplace_back(olds[i], news[j]);
                break;
            }
        }
    }
    for (std::size_t j = 0; j < news.size(); ++j)
        if (!new_used[j]) d.added.push_back(news[j]);
    for (std::size_t i = 0; i < olds.size(); ++i)
        if (!old_used[i]) d.removed.push_back(olds[i]);

    // Induced-edge view.
    auto edge_multiset = [](const Scg& g) {
        std::multiset<std::string> out;
        for (const auto& e : g.edges()) out.insert(e.source.label + "\x1f" + e.target.label);
        return out;
    };
    auto olde = edge_multiset(old_g);
    auto newe = edge_multiset(new_g);
    auto decode = [](const std::string& k) {
        auto sep = k.find('\x1f');
        return Edge{NodeId{k.substr(0, sep)}, NodeId{k.substr(sep + 1)}};
    };
    for (const auto& k : newe) {
        auto it = olde.find(k);
        if (it != olde.end()) {
            olde.erase(it);
        } else {
            d.added_edges.push_back(decode(k));
        }
    }
    for (const auto& k : olde) d.removed_edges.push_back(decode(k));
    return d;
}

std::string render_diff(const ScgDiff& d) {
    std::string out;
    for (const auto& s : d.added) {
        out += "+ " + s.relation_text() + "\n";
        out += "    " + s.description + "\n";
    }
    for (const auto& s : d.removed) {
        out += "- " + s.relation_text() + "\n";
        out += "    " + s.description + "\n";
    }
    for (const auto& [before, after] : d.modified) {
        out += "~ " + before.relation_text() + " => " + after.relation_text() + "\n";
        if (before.description != after.description) {
            out += "    was: " + before.description + "\n";
            out += "    now: " + after.description + "\n";
        }
    }
    if (out.empty()) out = "(no differences)\n";
    return out;
}

Scg reverse_scg(const Scg& g) {
    std::vector<CausalStatement> statements;
    statements.reserve(g.statements().size());
    for (const auto& s : g.statements()) {
        statements.push_back(CausalStatement::make(s.targets, s.sources, s.description, s.index));
    }
    return Scg::make(std::move(statements), g.candidates());
}

std::vector<Edge> subsample_retained_edges(const Scg& g, double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0) {
        throw Error(ErrorCode::InvalidArgument, "fraction must be in (0, 1]");
    }
    auto all = g.edges();
    std::size_t n = all.size();
    std::size_t keep = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(n), std::ceil(fraction * static_cast<double>(n))));
    auto perm = seeded_permutation(n, seed);
    std::vector<bool> retained(n, false);
    for (std::size_t i = 0; i < keep; ++i) retained[perm[i]] = true;
    std::vector<Edge> out;
    for (std::size_t i = 0; i < n; ++i)
        if (retained[i]) out.push_back(all[i]);
    return out;
}

Scg subsample_scg(const Scg& g, double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0) {
        throw Error(ErrorCode::InvalidArgument, "fraction must be in (0, 1]");
    }
    auto all = g.edges();
    std::size_t n = all.size();
    std::size_t keep = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(n), std::ceil(fraction * static_cast<double>(n))));
    auto perm = seeded_permutation(n, seed);
    std::vector<bool> retained(n, false);
    for (std::size_t i = 0; i < keep; ++i) retained[perm[i]] = true;

    std::vector<CausalStatement> statements;
    std::size_t edge_pos = 0;
    for (const auto& s : g.statements()) {
        // Retained (source, target) pairs for this statement, edge order.
        std::vector<std::pair<std::size_t, std::size_t>> kept;
        for (std::size_t si = 0; si < s.sources.size(); ++si) {
            for (std::size_t ti = 0; ti < s.targets.size(); ++ti) {
                if (retained[edge_pos++]) kept.emplace_back(si, ti);
            }
        }
        if (kept.empty()) continue;

        std::vector<std::size_t> kept_sources;
        std::set<std::size_t> kept_target_union;
        std::map<std::size_t, std::set<std::size_t>> by_source;
        for (auto [si, ti] : kept) {
            if (!by_source.count(si)) kept_sources.push_back(si);
            by_source[si].insert(ti);
            kept_target_union.insert(ti);
        }
        bool full_product = true;
        for (const auto& [si, ts] : by_source) {
            if (ts != kept_target_union) {
                full_product = false;
                break;
            }
        }
        auto nodes_at = [](const std::vector<NodeId>& pool, const auto& indices) {
            std::vector<NodeId> out;
            for (auto idx : indices) out.push_back(pool[idx]);
            return out;
        };
        if (full_product) {
            std::vector<std::size_t> tgt_sorted(kept_target_union.begin(),
                                                kept_target_union.end());
            statements.push_back(CausalStatement::make(nodes_at(s.sources, kept_sources),
                                                       nodes_at(s.targets, tgt_sorted),
                                                       s.description));
        } else {
            // Not a Cartesian product anymore: split per source so the
            // retained edge set is preserved exactly.
            for (auto si : kept_sources) {
                std::vector<std::size_t> ts(by_source[si].begin(), by_source[si].end());
                statements.push_back(CausalStatement::make({s.sources[si]},
                                                           nodes_at(s.targets, ts),
                                                           s.description));
            }
        }
    }
    return Scg::make(std::move(statements), g.candidates());
}

}  // namespace ego
