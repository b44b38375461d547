#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gbt/gates.hpp"
#include "gbt/tree.hpp"

namespace gbt {

/// Fixed-length sketch of an environment summary: domain bucket, hashed
/// file-set sketch, tool flags, risk footprint counts; L2-normalized.
Vec env_signature_vector(const EnvSummary& env);
inline constexpr std::size_t kEnvSignatureDim = 64;

struct LeafCandidate {
    int node_id = -1;
    double desc_sim = 0.0;
    double env_sim = 0.0;
};

/// Success leaves in the family subtree ranked by description cosine to the
/// task, filtered by environment-signature cosine >= theta_env, capped at
/// top_k. Empty result signals recovery infeasible.
std::vector<LeafCandidate> retrieve_leaves(const std::string& task_desc, const GBTree& tree,
                                           int family_root, const TextEmbedder& embedder,
                                           double theta_env, const EnvSummary& env_now,
                                           int top_k);

struct RecoveryPlan {
    std::vector<int> path;  // current node first, success leaf last
    double total_cost = 0.0;
};

/// Dijkstra over the family subtree's undirected parent/child edges,
/// restricted to nodes whose preconditions hold against env. Edge cost for
/// entering u is 1 + lambda * risk_level(u); paths longer than d_max edges
/// are rejected; exact ties resolve to the lexicographically smallest
/// node-id path. nullopt is the safe-failure signal.
std::optional<RecoveryPlan> plan_recovery(const GBTree& tree, int current_node,
                                          const std::vector<int>& candidate_leaves,
                                          const EnvSummary& env, double lambda, int d_max);

bool precondition_holds(const MacroNode& node, const EnvSummary& env);

double edge_cost(double lambda, int risk_level);

}  // namespace gbt
