#include "gbt/router.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace gbt {

std::vector<FamilyPrototypes> prototypes_from_json(const Json& j, const TextEmbedder& embedder) {
    std::vector<FamilyPrototypes> out;
    for (const auto& [family, protos] : j.items()) {
        FamilyPrototypes p;
        p.family_id = family;
        p.prototypes = protos.get<std::vector<std::string>>();
        if (p.prototypes.size() < 2 || p.prototypes.size() > 8)
            throw SchemaError("family " + family + " needs 2..8 prototypes");
        for (const auto& t : p.prototypes) p.embeddings.push_back(embedder.embed(t));
        out.push_back(std::move(p));
    }
    std::sort(out.begin(), out.end(),
              [](const FamilyPrototypes& a, const FamilyPrototypes& b) {
                  return a.family_id < b.family_id;
              });
    return out;
}

std::vector<FamilyPrototypes> load_prototypes(const std::string& file,
                                              const TextEmbedder& embedder) {
    std::ifstream in(file);
    if (!in) throw SchemaError("cannot open " + file);
    return prototypes_from_json(Json::parse(in), embedder);
}

namespace {

std::map<std::string, double> family_probs(const Vec& query,
                                           const std::vector<FamilyPrototypes>& sets,
                                           double t_fam) {
    std::map<std::string, double> scores;
    for (const auto& fam : sets) {
        double best = -1.0;
        for (const auto& emb : fam.embeddings) best = std::max(best, cosine(query, emb));
        scores[fam.family_id] = best;
    }
    double max_score = -1.0;
    for (const auto& [f, s] : scores) max_score = std::max(max_score, s);
    double denom = 0.0;
    std::map<std::string, double> probs;
    for (const auto& [f, s] : scores) {
        const double e = std::exp((s - max_score) / t_fam);
        probs[f] = e;
        denom += e;
    }
    for (auto& [f, p] : probs) p /= denom;
    return probs;
}

}  // namespace

RoutingDecision route(const std::string& task_desc,
                      const std::vector<FamilyPrototypes>& prototype_sets, double t_fam,
                      double delta_fam, const TextEmbedder& embedder) {
    RoutingDecision out;
    if (prototype_sets.empty()) return out;
    out.probs = family_probs(embedder.embed(task_desc), prototype_sets, t_fam);
    std::string best;
    for (const auto& [f, p] : out.probs) {
        if (best.empty() || p > out.probs.at(best)) best = f;  // map order breaks ties low
    }
    out.p_max = out.probs.at(best);
    if (out.p_max >= delta_fam) {
        out.family = best;
        out.abstained = false;
    }
    return out;
}

RerootDecision maybe_reroot(const std::string& current_family, const std::string& current_summary,
                            const std::vector<FamilyPrototypes>& prototype_sets,
                            double delta_switch, double delta_fam, double t_fam,
                            const TextEmbedder& embedder) {
    RerootDecision out;
    const auto probs = family_probs(embedder.embed(current_summary), prototype_sets, t_fam);
    const auto cur = probs.find(current_family);
    out.p_current = cur == probs.end() ? 0.0 : cur->second;
    std::string challenger;
    for (const auto& [f, p] : probs) {
        if (f == current_family) continue;
        if (challenger.empty() || p > probs.at(challenger)) challenger = f;
    }
    if (challenger.empty()) return out;
    out.new_family = challenger;
    out.p_new = probs.at(challenger);
    out.reroot = (out.p_new - out.p_current) >= delta_switch && out.p_new >= delta_fam;
    if (!out.reroot) out.new_family.clear();
    return out;
}

}  // namespace gbt
