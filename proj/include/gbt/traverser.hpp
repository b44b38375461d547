#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "gbt/config.hpp"
#include "gbt/recovery.hpp"
#include "gbt/router.hpp"
#include "gbt/scenario.hpp"
#include "gbt/scoring.hpp"
#include "gbt/tree.hpp"

namespace gbt {

enum class Regime { advance, fragile, explore };
const std::string& to_string(Regime r);

struct MatchResult {
    std::optional<int> child_id;
    double s_top1 = 0.0;
    double s_top2 = 0.0;
    Regime regime = Regime::explore;
};

/// Cosine of the proposal against every child description; regime from the
/// thresholds; selected child is the cosine argmax with exact ties broken
/// by selection score then lowest node id. Leaves yield explore.
MatchResult match_children(const Vec& proposal_embedding, const GBTree& tree, int node_id,
                           const std::string& cluster, const Config& cfg);

struct AllowedResult {
    bool ok = true;
    std::optional<GateVerdict> verdict;
    std::string gate_id;
    bool evaluated = false;  // false for non-hard primitives (no gate ran)
};

/// HardGateOK AND GateOK(v'): global library conjunction plus the active
/// node's local gates. Non-hard primitives pass without evaluation.
AllowedResult allowed(const StructuredContext& ctx, bool is_hard, const GateLibrary& lib,
                      const std::vector<Gate>* node_gates, const PayloadClassifier* classifier);

enum class RunMode { native, guardrail_only, gbt_basic, gbt_se };
RunMode mode_from_string(const std::string& s);
const std::string& to_string(RunMode m);

struct StepRecord {
    std::string proposal;
    std::string regime;  // advance | fragile | explore | scripted | recovery
    double s_top1 = 0.0;
    double s_top2 = 0.0;
    int node = -1;  // node advanced to, -1 when none
    bool progressed = false;
    int hard_attempts = 0;
    int blocked = 0;
    bool covered_after = true;
};

struct RecoveryRecord {
    bool invoked = false;
    std::string stall_reason;
    std::vector<int> candidates;
    std::vector<int> path;
    double cost = 0.0;
    bool completed = false;
    std::vector<std::string> gate_verdicts;
};

struct EpisodeRecord {
    std::string scenario_id;
    std::string task_desc;
    std::string mode;
    std::optional<std::string> family;
    double p_max = 0.0;
    bool abstained = true;
    bool rerooted = false;
    std::vector<int> spine;
    std::vector<StepRecord> steps;
    std::vector<bool> covered_trace;
    bool covered = false;
    bool success = false;
    bool violation = false;
    bool unsafe_success = false;
    int hard_attempts = 0;
    int blocked = 0;
    bool stall = false;
    RecoveryRecord recovery;
    std::int64_t chars = 0;
    std::string error;
    // audit: every executed hard primitive with the gate outcome it ran under
    std::vector<Json> exec_log;
};

Json to_json(const EpisodeRecord& r);
EpisodeRecord episode_from_json(const Json& j);

int coverage_label(const EpisodeRecord& r);

/// Context bundle the executor sees: task summary, spine descriptions,
/// bounded node-local summary; structured safety-critical fields ride
/// alongside verbatim and never через the summary channel.
Json spine_context(const EpisodeRecord& r, const GBTree& tree, const SimState& state,
                   int budget_chars);

class EpisodeRunner {
public:
    EpisodeRunner(const GBTree* tree, const GateLibrary* library,
                  const std::vector<FamilyPrototypes>* prototypes, const Config* cfg,
                  const TextEmbedder* embedder, const PayloadClassifier* classifier);

    EpisodeRecord run(const Scenario& scenario, const ScenarioSet& set, RunMode mode) const;

private:
    const GBTree* tree_;
    const GateLibrary* library_;
    const std::vector<FamilyPrototypes>* prototypes_;
    const Config* cfg_;
    const TextEmbedder* embedder_;
    const PayloadClassifier* classifier_;
};

struct RunReport {
    std::string mode;
    std::uint64_t seed = 0;
    std::vector<EpisodeRecord> episodes;

    Json to_json() const;  // per-episode rows + aggregate columns
};

Json aggregate_report(const std::vector<EpisodeRecord>& episodes);

}  // namespace gbt
