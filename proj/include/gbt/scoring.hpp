#pragma once

#include <string>

#include "gbt/tree.hpp"

namespace gbt {

/// Cluster key: coarse resource family + risk level + discrete-signature
/// bucket. Deterministic; keeps per-context statistics low-variance.
std::string cluster_key(const std::string& family, int risk_level,
                        const DiscreteSignature& sigma_disc);

/// Laplace add-one smoothing; the empty counter yields the 0.5 prior.
double laplace_rate(const NodeStats& stats);

/// alpha * sim + beta * rate
double score_value(double sim, double rate, double alpha, double beta);

/// Selection score of `child_id` under `parent_id` against an embedded
/// proposal, conditioned on the cluster's success counters.
double child_score(const GBTree& tree, int parent_id, int child_id, const Vec& proposal_embedding,
                   const std::string& cluster, double alpha, double beta);

}  // namespace gbt
