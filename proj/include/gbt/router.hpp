#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gbt/embedding.hpp"
#include "gbt/events.hpp"

namespace gbt {

struct FamilyPrototypes {
    std::string family_id;
    std::vector<std::string> prototypes;  // 2..8 short texts
    std::vector<Vec> embeddings;          // derived
};

struct RoutingDecision {
    std::optional<std::string> family;
    double p_max = 0.0;
    bool abstained = true;
    std::map<std::string, double> probs;
};

std::vector<FamilyPrototypes> prototypes_from_json(const Json& j, const TextEmbedder& embedder);
std::vector<FamilyPrototypes> load_prototypes(const std::string& file, const TextEmbedder& embedder);

/// Best-prototype cosine per family, temperature-scaled softmax, abstention
/// below delta_fam. Ties break toward the lexicographically smallest family.
RoutingDecision route(const std::string& task_desc,
                      const std::vector<FamilyPrototypes>& prototype_sets, double t_fam,
                      double delta_fam, const TextEmbedder& embedder);

struct RerootDecision {
    bool reroot = false;
    std::string new_family;
    double p_new = 0.0;
    double p_current = 0.0;
};

/// Invoked every m macro steps with the running task summary. Reroots only
/// when the challenger clears both the margin and the abstention threshold;
/// gates are never touched by rerooting.
RerootDecision maybe_reroot(const std::string& current_family, const std::string& current_summary,
                            const std::vector<FamilyPrototypes>& prototype_sets,
                            double delta_switch, double delta_fam, double t_fam,
                            const TextEmbedder& embedder);

}  // namespace gbt
