#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gbt/miner.hpp"
#include "gbt/traverser.hpp"

namespace gbt {

/// Reference diagnoser port: the spine node at the last step that still
/// produced an observable delta; the last node when progress never ceased;
/// the first when nothing progressed. Returns nothing on an empty spine.
std::optional<int> diagnose(const EpisodeRecord& failure);

struct AnalogMatch {
    int leaf_id = -1;
    int aligned_node = -1;  // node on the success path best aligned with v*
    int import_node = -1;   // its successor, the macro to import
    double task_sim = 0.0;
    double align_sim = 0.0;
};

/// Top-R success leaves by task-description cosine; v* is aligned to each
/// path node that has a successor, the best-aligned pair wins.
std::optional<AnalogMatch> retrieve_analogs(const std::string& task_desc, const GBTree& tree,
                                            int family_root, int v_star,
                                            const TextEmbedder& embedder, int top_r);

struct RepairProposal {
    int target_node = -1;
    bool reuse = false;
    int reuse_child_id = -1;
    MacroNode payload;  // add_child payload; carries every parent gate up front
    std::string imported_from;
    std::vector<std::string> inherited_gate_ids;
};

RepairProposal build_repair(const GBTree& tree, int v_star, const AnalogMatch& match,
                            double theta_merge);

struct RegressionOutcome {
    bool accepted = false;
    std::string reason;
    double success_before = 0.0;
    double success_after = 0.0;
    int replayed = 0;
    bool low_power = false;  // fewer than the required historical successes
    int unsafe_checked = 0;
    int new_node_id = -1;
};

/// Both suites: (a) historical successes routed through v* replayed under
/// the candidate edit may not degrade by more than delta_succ; (b) every
/// recorded unsafe context whose minimal window maps to v* must remain
/// blocked. Gate removal/weakening is rejected before any replay.
RegressionOutcome apply_repair(GBTree& tree, const RepairProposal& proposal,
                               const ScenarioSet& scenarios,
                               const std::vector<EpisodeRecord>& history,
                               const std::vector<FamilyPrototypes>& prototypes,
                               const GateLibrary& library,
                               const std::vector<CorpusEntry>& unsafe_corpus, const Config& cfg,
                               const TextEmbedder& embedder, const PayloadClassifier* classifier);

struct EvolveOutcome {
    int proposals = 0;
    int accepted = 0;
    std::vector<Json> log;
};

/// Full failure-driven loop over covered failures from a run report.
EvolveOutcome evolve(GBTree& tree, const std::vector<EpisodeRecord>& episodes,
                     const ScenarioSet& scenarios,
                     const std::vector<FamilyPrototypes>& prototypes, const GateLibrary& library,
                     const std::vector<CorpusEntry>& unsafe_corpus, const Config& cfg,
                     const TextEmbedder& embedder, const PayloadClassifier* classifier);

}  // namespace gbt
