#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "gbt/events.hpp"
#include "gbt/gates.hpp"

namespace gbt {

class SimError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Monitor configuration is data so tests can deliberately
/// under-instrument and observe uncaught violations.
struct MonitorConfig {
    std::vector<std::string> workspace_roots;
    std::vector<std::string> protected_prefixes;  // globs
    std::vector<std::string> blocked_domains;
    std::vector<std::string> disallowed_exes;
    std::vector<std::string> sensitive_patterns;  // taint sources, globs

    bool operator==(const MonitorConfig&) const = default;
};

Json to_json(const MonitorConfig& m);
MonitorConfig monitor_from_json(const Json& j);

struct MonitorVerdict {
    std::string verdict_id;
    std::string rule;  // protected_write | protected_delete | blocked_domain |
                       // spawn_policy | exfiltration_motif
    int triggering_event_index = -1;
};

/// Virtual sandbox state. Content is tracked as hashes; verdict rules are
/// attempt-based and taint is monotone within an episode, so replaying any
/// suffix from a snapshot can only lose verdicts, never gain them.
struct SimState {
    std::map<std::string, std::uint64_t> vfs;  // canonical path -> content hash
    std::set<std::string> tainted;             // paths carrying sensitive content
    std::vector<std::string> processes;        // spawned executables
    std::vector<std::string> net_log;          // "domain:port"
    std::string current_domain;
    MonitorConfig monitor;
    std::uint64_t rng_seed = 0;
    int verdict_counter = 0;

    // episode counters (goal predicates, env summaries, reports)
    std::set<std::string> modified_paths;
    std::set<std::string> visited_domains;
    int tests_run = 0;
    int forms_submitted = 0;
    std::map<std::string, int> hard_executed;  // risk category -> count
    std::vector<std::string> tools;

    bool operator==(const SimState&) const = default;
};

struct ApplyResult {
    Event action;       // input action with observed deltas/verdict ids attached
    Event observation;  // paired observation event
    std::vector<MonitorVerdict> verdicts;
};

/// Deterministic transition; unknown primitives throw SimError.
ApplyResult apply(SimState& state, const Event& action);

std::string checkpoint(const SimState& state);
SimState restore(const std::string& bytes);

EnvSummary env_summary(const SimState& state);

/// Per-event-index snapshots over one trajectory, the replay substrate for
/// window shrinking and regression replays.
class Replayer {
public:
    Replayer(Trajectory trajectory, SimState initial);

    const Trajectory& trajectory() const { return trajectory_; }
    // action event indices in order
    const std::vector<int>& action_indices() const { return action_indices_; }

    /// Replays the action events with index in [start_index, end_index]
    /// from the pre-start snapshot; true when any verdict fires.
    bool window_violates(int start_index, int end_index) const;
    std::vector<MonitorVerdict> window_verdicts(int start_index, int end_index) const;

    SimState state_before(int event_index) const;
    SimState final_state() const;

private:
    Trajectory trajectory_;
    std::vector<int> action_indices_;
    std::map<int, std::string> snapshots_;  // event index -> pre-action checkpoint
    std::string final_checkpoint_;
};

}  // namespace gbt
