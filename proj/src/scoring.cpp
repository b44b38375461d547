#include "gbt/scoring.hpp"

#include "gbt/util.hpp"

namespace gbt {

std::string cluster_key(const std::string& family, int risk_level,
                        const DiscreteSignature& sigma_disc) {
    const std::uint64_t bucket = fnv1a64(sigma_disc.canonical()) % 8;
    return family + "|" + std::to_string(risk_level) + "|b" + std::to_string(bucket);
}

double laplace_rate(const NodeStats& stats) {
    return (stats.succ + 1.0) / (stats.succ + stats.fail + 2.0);
}

double score_value(double sim, double rate, double alpha, double beta) {
    return alpha * sim + beta * rate;
}

double child_score(const GBTree& tree, int parent_id, int child_id, const Vec& proposal_embedding,
                   const std::string& cluster, double alpha, double beta) {
    const MacroNode& parent = tree.node(parent_id);
    const MacroNode& child = tree.node(child_id);
    NodeStats stats;  // unseen cluster -> 0/0 -> 0.5 prior
    const auto per_child = parent.selection_stats.find(child_id);
    if (per_child != parent.selection_stats.end()) {
        const auto per_cluster = per_child->second.find(cluster);
        if (per_cluster != per_child->second.end()) stats = per_cluster->second;
    }
    const double sim = cosine(proposal_embedding, child.desc_embedding);
    return score_value(sim, laplace_rate(stats), alpha, beta);
}

}  // namespace gbt
