#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gbt/config.hpp"
#include "gbt/evolution.hpp"
#include "gbt/miner.hpp"
#include "gbt/scenario.hpp"
#include "gbt/traverser.hpp"

namespace gbt {

/// Distilled policy artifact: the tree (node gates embedded), the global
/// gate library, both corpora, the build report, and the config that
/// produced it. Persisted as a directory of canonical JSON files.
struct Artifact {
    GBTree tree;
    GateLibrary library;
    std::vector<CorpusEntry> unsafe_corpus;
    std::vector<CorpusEntry> benign_corpus;
    Json build_report;
    Config config;

    std::string safety_hash() const;

    void save(const std::string& dir) const;
    static Artifact load(const std::string& dir, const TextEmbedder& embedder);
};

struct DistillStats {
    int trajectories = 0;
    int inserted_paths = 0;
    int unsafe_mined = 0;
    int node_gates = 0;
    int global_gates = 0;
    int excluded_unstable = 0;
    int abstained = 0;
    std::vector<std::string> synthesis_failures;
    std::vector<std::string> quarantined;
};

/// logs -> primitives -> macros -> merge + gates. Deterministic in the
/// trajectory bytes; rerunning on the same inputs reproduces the artifact
/// byte for byte.
Artifact distill(const std::vector<Trajectory>& trajectories, const ScenarioSet& environment,
                 const Config& cfg, const TextEmbedder& embedder,
                 const PayloadClassifier* classifier);

/// Covered failures -> local repairs under both regression suites; the
/// unsafe-corpus audit reruns after the loop.
EvolveOutcome evolve_artifact(Artifact& artifact, const std::vector<EpisodeRecord>& episodes,
                              const ScenarioSet& scenarios, const TextEmbedder& embedder,
                              const PayloadClassifier* classifier);

RunReport run_episodes(const Artifact& artifact, const ScenarioSet& scenarios, RunMode mode,
                       std::uint64_t seed, int workers, const TextEmbedder& embedder,
                       const PayloadClassifier* classifier);

struct AuditReport {
    bool ok = true;
    std::vector<std::string> failures;
    Json details;
};

/// Structural invariants, gate round-trips, merge-into-gated-node absence,
/// unsafe-corpus non-re-admission; with two or more artifacts, rejection-set
/// expansion across versions over the probe corpus.
AuditReport audit_artifacts(const std::vector<const Artifact*>& artifacts,
                            const std::vector<StructuredContext>& probe,
                            const PayloadClassifier* classifier);

/// True when any gate in the artifact (global or node-local) rejects ctx.
bool rejected_by_artifact(const Artifact& artifact, const StructuredContext& ctx,
                          const PayloadClassifier* classifier);

std::vector<FamilyPrototypes> artifact_prototypes(const Artifact& artifact,
                                                  const TextEmbedder& embedder);

std::unique_ptr<PayloadClassifier> make_classifier(const Config& cfg);

}  // namespace gbt
