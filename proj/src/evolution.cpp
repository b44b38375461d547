#include "gbt/evolution.hpp"

#include <algorithm>
#include <set>

#include "gbt/util.hpp"

namespace gbt {

std::optional<int> diagnose(const EpisodeRecord& failure) {
    if (failure.spine.empty()) return std::nullopt;
    // walk steps that advanced onto the spine; remember the last one that
    // produced an observable delta
    int last_progress_pos = -1;
    int pos = -1;
    for (const auto& s : failure.steps) {
        if (s.node == -1) continue;
        pos += 1;
        if (s.progressed) last_progress_pos = pos;
    }
    if (last_progress_pos == -1) return failure.spine.front();
    const std::size_t idx = static_cast<std::size_t>(last_progress_pos);
    if (idx + 1 >= failure.spine.size()) return failure.spine.back();
    return failure.spine[idx];
}

namespace {

double leaf_task_sim(const MacroNode& leaf, const Vec& task_emb, const TextEmbedder& embedder) {
    double best = -2.0;
    for (const auto& t : leaf.task_descs) best = std::max(best, cosine(task_emb, embedder.embed(t)));
    if (best < -1.0) best = cosine(task_emb, leaf.desc_embedding);
    return best;
}

}  // namespace

std::optional<AnalogMatch> retrieve_analogs(const std::string& task_desc, const GBTree& tree,
                                            int family_root, int v_star,
                                            const TextEmbedder& embedder, int top_r) {
    const Vec task_emb = embedder.embed(task_desc);
    struct Ranked {
        int leaf;
        double sim;
    };
    std::vector<Ranked> ranked;
    for (int id : tree.success_leaves_under(family_root))
        ranked.push_back({id, leaf_task_sim(tree.node(id), task_emb, embedder)});
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return a.leaf < b.leaf;
    });
    if (top_r > 0 && ranked.size() > static_cast<std::size_t>(top_r))
        ranked.resize(static_cast<std::size_t>(top_r));

    const Vec v_star_emb = tree.node(v_star).desc_embedding;
    std::optional<AnalogMatch> best;
    for (const auto& r : ranked) {
        // success path below the family root; only nodes with successors align
        const std::vector<int> path = tree.path_from_root(r.leaf);
        for (std::size_t i = 2; i + 1 < path.size(); ++i) {
            const int candidate = path[i];
            if (candidate == v_star) continue;  // importing its own successor is a no-op path
            const double align = cosine(v_star_emb, tree.node(candidate).desc_embedding);
            AnalogMatch m;
            m.leaf_id = r.leaf;
            m.aligned_node = candidate;
            m.import_node = path[i + 1];
            m.task_sim = r.sim;
            m.align_sim = align;
            const bool better =
                !best || m.align_sim > best->align_sim ||
                (m.align_sim == best->align_sim &&
                 (m.task_sim > best->task_sim ||
                  (m.task_sim == best->task_sim && m.leaf_id < best->leaf_id)));
            if (better) best = m;
        }
    }
    return best;
}

RepairProposal build_repair(const GBTree& tree, int v_star, const AnalogMatch& match,
                            double theta_merge) {
    RepairProposal p;
    p.target_node = v_star;
    p.imported_from = "leaf:" + std::to_string(match.leaf_id) +
                      " via node:" + std::to_string(match.import_node);
    const MacroNode& imported = tree.node(match.import_node);

    // reuse an existing child when it already matches the imported successor
    for (int child_id : tree.node(v_star).children) {
        const double sim =
            cosine(tree.node(child_id).desc_embedding, imported.desc_embedding);
        if (sim >= theta_merge) {
            p.reuse = true;
            p.reuse_child_id = child_id;
            return p;
        }
    }

    MacroNode payload;
    payload.description = imported.description;
    payload.tags = imported.tags;
    payload.risk_level = imported.risk_level;
    payload.sigma_disc = imported.sigma_disc;
    payload.sigma_cont = imported.sigma_cont;
    payload.representative = imported.representative;
    payload.precondition = imported.precondition;
    payload.is_success_leaf = imported.is_success_leaf;
    payload.env_signature = imported.env_signature;
    payload.task_descs = imported.task_descs;
    // the parent's full node-local gate set rides along before anything else
    for (const Gate& g : tree.node(v_star).local_gates) {
        Gate inherited = g;
        inherited.id = g.id + "_inh";
        payload.local_gates.push_back(inherited);
        p.inherited_gate_ids.push_back(inherited.id);
    }
    for (const Gate& g : imported.local_gates) {
        Gate mirrored = g;
        mirrored.id = g.id + "_imp";
        payload.local_gates.push_back(mirrored);
    }
    p.payload = std::move(payload);
    return p;
}

namespace {

std::set<std::string> gate_expr_set(const std::vector<Gate>& gates) {
    std::set<std::string> out;
    for (const auto& g : gates) out.insert(print_expr(g.expr));
    return out;
}

}  // namespace

RegressionOutcome apply_repair(GBTree& tree, const RepairProposal& proposal,
                               const ScenarioSet& scenarios,
                               const std::vector<EpisodeRecord>& history,
                               const std::vector<FamilyPrototypes>& prototypes,
                               const GateLibrary& library,
                               const std::vector<CorpusEntry>& unsafe_corpus, const Config& cfg,
                               const TextEmbedder& embedder,
                               const PayloadClassifier* classifier) {
    RegressionOutcome out;
    const int v_star = proposal.target_node;

    if (!proposal.reuse) {
        // gate relaxation is rejected before any replay runs
        const auto parent_exprs = gate_expr_set(tree.node(v_star).local_gates);
        const auto payload_exprs = gate_expr_set(proposal.payload.local_gates);
        for (const auto& e : parent_exprs) {
            if (!payload_exprs.count(e)) {
                out.reason = "gate_relaxation: child payload drops parent gate";
                return out;
            }
        }
    }

    // candidate tree with the edit applied
    GBTree candidate = tree;
    int new_node = -1;
    if (!proposal.reuse)
        new_node = candidate.add_child(v_star, proposal.payload, embedder, "repair");

    // (a) success non-regression on histories routed through v*
    std::vector<const EpisodeRecord*> through;
    for (const auto& e : history) {
        if (!e.success || !e.covered) continue;
        if (std::find(e.spine.begin(), e.spine.end(), v_star) != e.spine.end())
            through.push_back(&e);
    }
    out.low_power = static_cast<int>(through.size()) < cfg.min_regression_successes;
    if (!through.empty()) {
        const EpisodeRunner runner(&candidate, &library, &prototypes, &cfg, &embedder, classifier);
        int still_ok = 0;
        for (const EpisodeRecord* e : through) {
            const auto sc = std::find_if(
                scenarios.scenarios.begin(), scenarios.scenarios.end(),
                [&](const Scenario& s) { return s.id == e->scenario_id; });
            if (sc == scenarios.scenarios.end()) continue;
            out.replayed += 1;
            const EpisodeRecord replay = runner.run(*sc, scenarios, RunMode::gbt_se);
            if (replay.success) still_ok += 1;
        }
        out.success_before = 1.0;
        out.success_after =
            out.replayed == 0 ? 1.0 : static_cast<double>(still_ok) / out.replayed;
        if (!out.low_power && out.success_before - out.success_after > cfg.delta_succ) {
            out.reason = "success_regression: " + std::to_string(out.success_before) + " -> " +
                         std::to_string(out.success_after) +
                         " exceeds delta_succ, witness scenario " +
                         through.front()->scenario_id;
            return out;
        }
    }

    // (b) unsafe non-re-admission for windows mapping to v*
    for (const auto& entry : unsafe_corpus) {
        if (!entry.gated) continue;
        if (std::find(entry.mapped_nodes.begin(), entry.mapped_nodes.end(), v_star) ==
            entry.mapped_nodes.end())
            continue;
        out.unsafe_checked += 1;
        bool blocked = !hard_gate_ok(library, entry.ctx, classifier).ok;
        if (!blocked) {
            EvalEnv env{&library.allowlists, classifier};
            for (int node_id : entry.mapped_nodes) {
                if (!candidate.has_node(node_id)) continue;
                if (!node_gate_ok(candidate.node(node_id).local_gates, entry.ctx, env).ok) {
                    blocked = true;
                    break;
                }
            }
        }
        if (!blocked) {
            out.reason = "unsafe_readmission: " + entry.ctx.trajectory_id + ":" +
                         std::to_string(entry.ctx.event_index);
            return out;
        }
    }

    out.accepted = true;
    out.new_node_id = new_node;
    tree = std::move(candidate);
    if (proposal.reuse)
        tree.bump_version(Json{{"op", "repair_reuse"},
                               {"node", v_star},
                               {"child", proposal.reuse_child_id},
                               {"imported_from", proposal.imported_from}});
    return out;
}

EvolveOutcome evolve(GBTree& tree, const std::vector<EpisodeRecord>& episodes,
                     const ScenarioSet& scenarios,
                     const std::vector<FamilyPrototypes>& prototypes, const GateLibrary& library,
                     const std::vector<CorpusEntry>& unsafe_corpus, const Config& cfg,
                     const TextEmbedder& embedder, const PayloadClassifier* classifier) {
    EvolveOutcome out;
    for (const auto& episode : episodes) {
        if (episode.success) continue;
        if (!episode.covered || coverage_label(episode) != 1) {
            out.log.push_back(Json{{"scenario", episode.scenario_id},
                                   {"outcome", "rejected"},
                                   {"reason", "not covered: self-evolution out of scope"}});
            continue;
        }
        // the failing transitions feed the selection statistics
        int prev = tree.family_root_of(episode.spine.empty() ? 0 : episode.spine.front());
        if (!episode.family) continue;
        for (int node_id : episode.spine) {
            if (!tree.has_node(node_id) || !tree.has_node(prev)) break;
            const MacroNode& child = tree.node(node_id);
            tree.record_outcome(prev, node_id,
                                cluster_key(*episode.family, child.risk_level, child.sigma_disc),
                                false);
            prev = node_id;
        }
        const auto v_star = diagnose(episode);
        if (!v_star) {
            out.log.push_back(Json{{"scenario", episode.scenario_id},
                                   {"outcome", "skipped"},
                                   {"reason", "empty spine"}});
            continue;
        }
        const int family_root = tree.family_root_of(*v_star);
        const auto analog = retrieve_analogs(episode.task_desc, tree, family_root, *v_star,
                                             embedder, cfg.analog_top_r);
        if (!analog) {
            out.log.push_back(Json{{"scenario", episode.scenario_id},
                                   {"outcome", "skipped"},
                                   {"reason", "no analog success leaf"}});
            continue;
        }
        const RepairProposal proposal = build_repair(tree, *v_star, *analog, cfg.theta_merge);
        out.proposals += 1;
        const RegressionOutcome result =
            apply_repair(tree, proposal, scenarios, episodes, prototypes, library, unsafe_corpus,
                         cfg, embedder, classifier);
        Json entry{{"scenario", episode.scenario_id},
                   {"v_star", *v_star},
                   {"imported_from", proposal.imported_from},
                   {"reuse", proposal.reuse},
                   {"outcome", result.accepted ? "accepted" : "rejected"},
                   {"reason", result.reason},
                   {"success_before", result.success_before},
                   {"success_after", result.success_after},
                   {"replayed", result.replayed},
                   {"low_power", result.low_power},
                   {"unsafe_checked", result.unsafe_checked},
                   {"version", tree.version()}};
        if (result.accepted) {
            out.accepted += 1;
            if (result.new_node_id != -1) entry["new_node"] = result.new_node_id;
        }
        out.log.push_back(std::move(entry));
    }
    return out;
}

}  // namespace gbt
