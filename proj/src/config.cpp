#include "gbt/config.hpp"

#include <fstream>

#include "gbt/util.hpp"

namespace gbt {

CtxOptions Config::ctx_options() const {
    CtxOptions opt;
    opt.history_bound = history_bound;
    opt.workspace_roots = workspace_roots;
    opt.sensitive_patterns = sensitive_patterns;
    return opt;
}

ExtractorOptions Config::extractor_options() const {
    ExtractorOptions opt;
    opt.fs_boundary_magnitude = fs_boundary_magnitude;
    opt.sensitive_patterns = sensitive_patterns;
    opt.workspace_roots = workspace_roots;
    return opt;
}

MergeThresholds Config::merge_thresholds() const { return MergeThresholds{theta_sig, theta_merge}; }

std::string Config::digest() const { return to_hex(fnv1a64(to_json().dump())); }

Json Config::to_json() const {
    return Json{{"history_bound", history_bound},
                {"theta_sig", theta_sig},
                {"theta_merge", theta_merge},
                {"theta_low", theta_low},
                {"theta_high", theta_high},
                {"delta_fam", delta_fam},
                {"t_fam", t_fam},
                {"delta_switch", delta_switch},
                {"reroot_period", reroot_period},
                {"lambda", lambda},
                {"d_max", d_max},
                {"theta_env", theta_env},
                {"leaf_top_k", leaf_top_k},
                {"eps_benign_global", eps_benign_global},
                {"eps_benign_node", eps_benign_node},
                {"alpha", alpha},
                {"beta", beta},
                {"analog_top_r", analog_top_r},
                {"delta_succ", delta_succ},
                {"min_regression_successes", min_regression_successes},
                {"delta_stab", delta_stab},
                {"stability_perturbations", stability_perturbations},
                {"safe_explore_budget", safe_explore_budget},
                {"repeat_proposal_cos", repeat_proposal_cos},
                {"context_budget_chars", context_budget_chars},
                {"fs_boundary_magnitude", fs_boundary_magnitude},
                {"split_traffic_threshold", split_traffic_threshold},
                {"embed_dim", embed_dim},
                {"workspace_roots", workspace_roots},
                {"sensitive_patterns", sensitive_patterns},
                {"allowlists", allowlists},
                {"payload_keywords", payload_keywords},
                {"baseline_gates", baseline_gates},
                {"prototypes", prototypes}};
}

Config Config::from_json(const Json& j) {
    Config d;  // defaults
    Config c;
    c.history_bound = j.value("history_bound", d.history_bound);
    c.theta_sig = j.value("theta_sig", d.theta_sig);
    c.theta_merge = j.value("theta_merge", d.theta_merge);
    c.theta_low = j.value("theta_low", d.theta_low);
    c.theta_high = j.value("theta_high", d.theta_high);
    c.delta_fam = j.value("delta_fam", d.delta_fam);
    c.t_fam = j.value("t_fam", d.t_fam);
    c.delta_switch = j.value("delta_switch", d.delta_switch);
    c.reroot_period = j.value("reroot_period", d.reroot_period);
    c.lambda = j.value("lambda", d.lambda);
    c.d_max = j.value("d_max", d.d_max);
    c.theta_env = j.value("theta_env", d.theta_env);
    c.leaf_top_k = j.value("leaf_top_k", d.leaf_top_k);
    c.eps_benign_global = j.value("eps_benign_global", d.eps_benign_global);
    c.eps_benign_node = j.value("eps_benign_node", d.eps_benign_node);
    c.alpha = j.value("alpha", d.alpha);
    c.beta = j.value("beta", d.beta);
    c.analog_top_r = j.value("analog_top_r", d.analog_top_r);
    c.delta_succ = j.value("delta_succ", d.delta_succ);
    c.min_regression_successes = j.value("min_regression_successes", d.min_regression_successes);
    c.delta_stab = j.value("delta_stab", d.delta_stab);
    c.stability_perturbations = j.value("stability_perturbations", d.stability_perturbations);
    c.safe_explore_budget = j.value("safe_explore_budget", d.safe_explore_budget);
    c.repeat_proposal_cos = j.value("repeat_proposal_cos", d.repeat_proposal_cos);
    c.context_budget_chars = j.value("context_budget_chars", d.context_budget_chars);
    c.fs_boundary_magnitude = j.value("fs_boundary_magnitude", d.fs_boundary_magnitude);
    c.split_traffic_threshold = j.value("split_traffic_threshold", d.split_traffic_threshold);
    c.embed_dim = j.value("embed_dim", d.embed_dim);
    c.workspace_roots = j.value("workspace_roots", d.workspace_roots);
    c.sensitive_patterns = j.value("sensitive_patterns", d.sensitive_patterns);
    c.allowlists = j.value("allowlists", d.allowlists);
    c.payload_keywords = j.value("payload_keywords", d.payload_keywords);
    c.baseline_gates = j.value("baseline_gates", d.baseline_gates);
    c.prototypes = j.value("prototypes", d.prototypes);
    return c;
}

Config Config::load(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw SchemaError("cannot open config " + file);
    return from_json(Json::parse(in));
}

void Config::save(const std::string& file) const {
    std::ofstream out(file);
    if (!out) throw SchemaError("cannot write config " + file);
    out << dump_canonical(to_json());
}

Config default_config() {
    Config c;
    c.prototypes = Json{
        {"code_editing",
         {"fix failing unit tests in a source module", "refactor source files and run the test suite",
          "patch code in the repository and keep tests green",
          "build the project and upload the build log"}},
        {"web_forms",
         {"browse a website and submit a form", "fill remaining form fields and submit",
          "complete a web form on a portal", "fill a survey form on a website"}},
        {"data_analysis",
         {"analyze a data file and produce a summary report",
          "compute statistics from input data and write the results report",
          "produce the analysis report from the dataset"}}};
    c.allowlists["egress_allow"] = {"corp.example", "files.corp.example"};
    return c;
}

}  // namespace gbt
