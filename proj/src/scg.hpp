#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace ego {

/// Name of one information block, e.g. "Person Status". Labels never
/// contain square brackets or newlines; comparison is exact after
/// trimming surrounding whitespace.
struct NodeId {
    std::string label;

    static NodeId make(std::string_view raw);

    bool operator==(const NodeId& o) const { return label == o.label; }
    bool operator<(const NodeId& o) const { return label < o.label; }
};

/// One "...[A] and [B] affects [C]..." block: multi-node statements
/// induce the Cartesian product of source x target edges.
struct CausalStatement {
    int index = 0;  // 1-based display order, normalized by Scg
    std::vector<NodeId> sources;
    std::vector<NodeId> targets;
    std::string description;

    static CausalStatement make(std::vector<NodeId> sources, std::vector<NodeId> targets,
                                std::string description, int index = 0);

    /// Statement identity for diffing: the (sources, targets) pair.
    std::string key() const;

    /// Header line in canonical form, without the "Causal Statement k:" prefix.
    std::string relation_text() const;

    bool same_relation(const CausalStatement& o) const;
    bool operator==(const CausalStatement& o) const;
};

struct Edge {
    NodeId source;
    NodeId target;
    bool operator==(const Edge& o) const { return source == o.source && target == o.target; }
    bool operator<(const Edge& o) const {
        return source < o.source || (source == o.source && target < o.target);
    }
};

/// The semantic causal graph: an ordered list of causal statements over a
/// fixed candidate vocabulary. Immutable after construction; every
/// operation returns a new value. The induced edge set is always a DAG.
class Scg {
public:
    Scg() = default;

    /// Validates and normalizes: all nodes in candidates, no self-loops,
    /// induced graph acyclic, indices renumbered 1..n.
    static Scg make(std::vector<CausalStatement> statements, std::vector<NodeId> candidates);

    const std::vector<CausalStatement>& statements() const { return statements_; }
    const std::vector<NodeId>& candidates() const { return candidates_; }
    bool empty() const { return statements_.empty(); }

    /// Induced edges in statement order (per-statement Cartesian products,
    /// duplicates preserved across statements).
    std::vector<Edge> edges() const;

    bool operator==(const Scg& o) const;

private:
    std::vector<CausalStatement> statements_;
    std::vector<NodeId> candidates_;  // insertion order, duplicates removed
};

struct AddStatement {
    CausalStatement statement;  // index ignored; appended
};
struct DeleteStatement {
    int index = 0;
};
struct EditStatement {
    int index = 0;
    std::vector<NodeId> sources;
    std::vector<NodeId> targets;
    std::string description;
};

using ScgEdit = std::variant<AddStatement, DeleteStatement, EditStatement>;

struct ScgDiff {
    std::vector<CausalStatement> added;
    std::vector<CausalStatement> removed;
    std::vector<std::pair<CausalStatement, CausalStatement>> modified;  // (before, after)
    std::vector<Edge> added_edges;    // induced-edge view of the same change
    std::vector<Edge> removed_edges;

    bool empty() const { return added.empty() && removed.empty() && modified.empty(); }
};

/// Parses the statement-block grammar. Accepts the canonical
/// "Causal Statement k:" headers as well as bare numbered lists
/// ("1.", "1:", "1)"), connective variants (affect/affects/
/// determine/determines, comma-joined node lists) and arbitrary
/// surrounding whitespace. Errors: Syntax, UnknownNode, Cycle.
Scg parse_scg(std::string_view text, const std::vector<NodeId>& candidates);

/// Canonical text form; stable byte-for-byte for equal graphs, and
/// parse_scg(render_scg(g), g.candidates()) == g.
std::string render_scg(const Scg& g);

/// Returns a new graph with the edit applied, indices renormalized.
/// Errors: Cycle (edit rejected), UnknownNode, Index.
Scg apply_edit(const Scg& g, const ScgEdit& e);

/// Statements matched by (sources, targets) key; leftovers paired by
/// original index count as modified; the rest added/removed.
ScgDiff diff_scg(const Scg& old_g, const Scg& new_g);

/// Human-readable diff with +/-/~ markers, one relation per line.
std::string render_diff(const ScgDiff& d);

/// Swaps sources and targets of every statement. Involution.
Scg reverse_scg(const Scg& g);

/// Keeps the first ceil(fraction * n_edges) edges of a single seeded
/// permutation, so retained sets nest across fractions under one seed.
/// Statements are restricted to their retained edges; emptied statements
/// are dropped.
Scg subsample_scg(const Scg& g, double fraction, std::uint64_t seed);

/// Retained-edge set (statement order) for a given fraction and seed;
/// exposed so nesting is directly checkable.
std::vector<Edge> subsample_retained_edges(const Scg& g, double fraction, std::uint64_t seed);

}  // namespace ego
