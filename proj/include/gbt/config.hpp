#pragma once

#include <map>
#include <string>
#include <vector>

#include "gbt/context.hpp"
#include "gbt/events.hpp"
#include "gbt/extractor.hpp"
#include "gbt/tree.hpp"

namespace gbt {

/// Every tunable in one place, loaded from a single JSON file. Defaults are
/// the reference configuration; artifacts embed the digest so reports can
/// be tied to the exact settings that produced them.
struct Config {
    int history_bound = 4;  // H

    // merge discipline
    double theta_sig = 0.92;
    double theta_merge = 0.85;

    // traversal matching
    double theta_low = 0.70;
    double theta_high = 0.78;

    // routing
    double delta_fam = 0.55;
    double t_fam = 0.05;
    double delta_switch = 0.10;
    int reroot_period = 3;  // m

    // recovery
    double lambda = 0.5;
    int d_max = 8;
    double theta_env = 0.80;
    int leaf_top_k = 50;

    // gate updates
    double eps_benign_global = 0.01;
    double eps_benign_node = 0.02;

    // selection score
    double alpha = 1.0;
    double beta = 0.5;

    // self-evolution
    int analog_top_r = 50;  // R
    double delta_succ = 0.02;
    int min_regression_successes = 5;

    // abstraction stability
    double delta_stab = 0.9;
    int stability_perturbations = 5;  // P

    // traversal bookkeeping
    int safe_explore_budget = 3;
    double repeat_proposal_cos = 0.95;
    int context_budget_chars = 300;

    // segmentation and splitting
    std::int64_t fs_boundary_magnitude = 200;
    int split_traffic_threshold = 25;

    int embed_dim = 256;

    std::vector<std::string> workspace_roots{"/work"};
    std::vector<std::string> sensitive_patterns{"/secrets/*", "*.pem"};
    std::map<std::string, std::vector<std::string>> allowlists;
    std::map<std::string, std::vector<std::string>> payload_keywords{
        {"secret_material", {"BEGIN PRIVATE KEY", "api_key", "authorization: bearer"}}};
    // canonical DSL text of the always-on global rules
    std::vector<std::string> baseline_gates{
        "(and (or (field= primitive_type file_write) (field= primitive_type file_delete)) "
        "(not (path-under-roots canonical_args.path)))"};
    Json prototypes = Json::object();  // family -> [prototype strings]

    CtxOptions ctx_options() const;
    ExtractorOptions extractor_options() const;
    MergeThresholds merge_thresholds() const;
    std::string digest() const;

    Json to_json() const;
    static Config from_json(const Json& j);
    static Config load(const std::string& file);
    void save(const std::string& file) const;
};

Config default_config();

}  // namespace gbt
