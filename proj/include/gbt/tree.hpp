#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gbt/embedding.hpp"
#include "gbt/extractor.hpp"
#include "gbt/gates.hpp"

namespace gbt {

class TreeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NodeStats {
    int succ = 0;
    int fail = 0;
};

struct MacroNode {
    int node_id = -1;
    int parent_id = -1;  // -1 only on the root
    std::string description;
    std::vector<std::string> tags;
    int risk_level = 0;
    DiscreteSignature sigma_disc;
    Vec sigma_cont;
    std::vector<Gate> local_gates;
    std::vector<int> children;  // ordered
    // per-child, per-cluster success counters (keyed by cluster string)
    std::map<int, std::map<std::string, NodeStats>> selection_stats;
    std::optional<GateExpr> precondition;
    std::optional<Vec> env_signature;  // success leaves only
    bool is_success_leaf = false;

    // behavior payload for on-demand materialization
    std::vector<Event> representative;  // primitive actions of the first constituent
    std::vector<Vec> constituent_sigs;  // sigma_cont of every merged constituent
    int constituents = 0;
    std::vector<std::string> task_descs;  // tasks that reached this success leaf (capped)

    Vec desc_embedding;  // derived, not serialized

    bool has_gates() const { return !local_gates.empty(); }
};

struct MergeThresholds {
    double theta_sig = 0.92;
    double theta_merge = 0.85;
};

struct MergeDecision {
    bool merge = false;
    int child_id = -1;
    double desc_sim = 0.0;
};

struct InsertStep {
    std::string action;  // "merge" | "new"
    int node_id = -1;
};

struct InsertResult {
    std::vector<int> path_nodes;
    int new_nodes = 0;
    std::vector<InsertStep> steps;
};

/// Candidate macro for insertion: span metadata plus its raw primitives.
struct MacroCandidate {
    MacroSpan span;
    std::vector<Event> representative;
};

/// Single rooted gated behavior tree. All mutating entry points re-check
/// structural invariants; rejected edits leave the tree untouched.
class GBTree {
public:
    GBTree();

    const MacroNode& node(int id) const;
    bool has_node(int id) const { return nodes_.count(id) > 0; }
    int root_id() const { return 0; }
    const std::map<std::string, int>& family_roots() const { return family_roots_; }
    const std::map<int, MacroNode>& nodes() const { return nodes_; }
    int version() const { return version_; }
    const std::vector<Json>& audit_log() const { return audit_log_; }

    int ensure_family_root(const std::string& family);

    MergeDecision try_merge(int parent_id, const MacroSpan& candidate, const Vec& candidate_embedding,
                            const MergeThresholds& th) const;

    InsertResult insert_path(const std::string& family, const std::vector<MacroCandidate>& macros,
                             bool success, const std::optional<Vec>& env_signature,
                             const std::string& task_desc, const MergeThresholds& th,
                             const TextEmbedder& embedder);

    /// Aliasing audit on an ungated high-traffic node; splits into sibling
    /// nodes when constituents fall into >=2 signature clusters.
    std::optional<Json> audit_split(int node_id, int traffic_threshold, double theta_sig);

    /// Guarded low-level edit: attaching an existing node under a new
    /// parent is rejected (second parent / ancestor edge); returns false
    /// and leaves the tree unchanged.
    bool attach_existing(int parent_id, int child_id);

    /// Adds a brand-new child; payload's id is assigned by the tree.
    int add_child(int parent_id, MacroNode payload, const TextEmbedder& embedder,
                  const std::string& audit_op = "add_child");

    void add_node_gate(int node_id, Gate gate);
    void set_precondition(int node_id, GateExpr expr);
    void record_outcome(int parent_id, int child_id, const std::string& cluster_key, bool success);

    bool is_ancestor(int ancestor, int descendant) const;
    std::vector<int> path_from_root(int node_id) const;
    int family_root_of(int node_id) const;
    std::vector<int> subtree_of(int node_id) const;
    std::vector<int> success_leaves_under(int node_id) const;

    /// All node-local gates, in (node_id, gate id) order.
    std::vector<const Gate*> all_node_gates() const;
    std::string gate_safety_hash() const;

    void validate() const;
    void bump_version(const Json& audit_record);

    Json to_json() const;
    static GBTree from_json(const Json& j);
    void save(const std::string& file) const;
    static GBTree load(const std::string& file, const TextEmbedder& embedder);
    void reembed(const TextEmbedder& embedder);

private:
    MacroNode& node_mut(int id);
    int fresh_id() { return next_id_++; }

    std::map<int, MacroNode> nodes_;
    std::map<std::string, int> family_roots_;
    int next_id_ = 1;
    int version_ = 0;
    std::vector<Json> audit_log_;
};

Json node_to_json(const MacroNode& n);
MacroNode node_from_json(const Json& j);

}  // namespace gbt
