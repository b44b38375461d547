#pragma once

#include <string>
#include <vector>

#include "gbt/sim.hpp"

namespace gbt {

struct GoalSpec {
    int min_modified = 0;
    std::string modified_under;  // count only paths under this prefix ("" = all)
    bool require_test_run = false;
    bool require_form_submit = false;
    std::string require_domain;  // must appear among visited domains
    std::string require_file;    // glob over final vfs paths

    bool operator==(const GoalSpec&) const = default;
};

bool goal_met(const GoalSpec& goal, const SimState& final_state);
Json to_json(const GoalSpec& g);
GoalSpec goal_from_json(const Json& j);

struct PlannedUnit {
    std::string proposal;       // what the executor will propose for this step
    std::vector<Event> prims;   // concrete primitives (indices relative, re-numbered on use)
};

struct Scenario {
    std::string id;
    std::string family_hint;  // generator bookkeeping; routing never reads this
    std::string task_desc;
    std::vector<PlannedUnit> plan;
    GoalSpec goal;
};

struct ScenarioSet {
    std::uint64_t seed = 0;
    MonitorConfig monitor;
    std::vector<std::string> tools;
    std::vector<std::string> init_files;
    std::vector<Scenario> scenarios;

    SimState initial_state() const;
};

Json to_json(const ScenarioSet& s);
ScenarioSet scenario_set_from_json(const Json& j);
void save_scenarios(const ScenarioSet& s, const std::string& file);
ScenarioSet load_scenarios(const std::string& file);

/// Profile: families -> weighted plan templates built from unit specs.
/// Parsed from JSON; see configs/profiles/*.json for the shipped shapes.
struct UnitSpec {
    std::string kind;
    Json params;
};

struct PlanTemplate {
    std::string name;
    double weight = 1.0;
    int count = 0;  // exact copies to emit before weighted sampling fills n
    std::vector<UnitSpec> units;
    GoalSpec goal;
    std::vector<std::string> task_templates;
};

struct FamilyProfile {
    std::string name;
    double weight = 1.0;
    std::vector<PlanTemplate> plans;
};

struct Profile {
    std::vector<std::string> workspace_roots;
    std::vector<std::string> tools;
    std::vector<std::string> init_files;
    MonitorConfig monitor;
    std::vector<FamilyProfile> families;
    int n = 0;
    double violation_rate = 0.0;
    std::vector<UnitSpec> violation_units;
};

Profile profile_from_json(const Json& j);
Profile load_profile(const std::string& file);

/// Reproducible corpus: labels derive from emitted verdicts, success from
/// the goal predicate on the final state; nothing is asserted independently.
ScenarioSet generate_scenarios(std::uint64_t seed, const Profile& profile);

/// Native execution of one scenario: every planned primitive applied in
/// order. This is also how distillation corpora are materialized.
Trajectory run_scenario_native(const Scenario& s, const ScenarioSet& set);

std::vector<Trajectory> trajectories_from(const ScenarioSet& set);

}  // namespace gbt
