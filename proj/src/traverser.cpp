#include "gbt/traverser.hpp"

#include <algorithm>

#include "gbt/util.hpp"

namespace gbt {

const std::string& to_string(Regime r) {
    static const std::string names[] = {"advance", "fragile", "explore"};
    return names[static_cast<int>(r)];
}

RunMode mode_from_string(const std::string& s) {
    if (s == "native") return RunMode::native;
    if (s == "guardrail-only") return RunMode::guardrail_only;
    if (s == "gbt-basic") return RunMode::gbt_basic;
    if (s == "gbt-se") return RunMode::gbt_se;
    throw SchemaError("unknown mode: " + s);
}

const std::string& to_string(RunMode m) {
    static const std::string names[] = {"native", "guardrail-only", "gbt-basic", "gbt-se"};
    return names[static_cast<int>(m)];
}

MatchResult match_children(const Vec& proposal_embedding, const GBTree& tree, int node_id,
                           const std::string& cluster_family, const Config& cfg) {
    MatchResult out;
    const MacroNode& node = tree.node(node_id);
    if (node.children.empty()) return out;  // leaf: explore with no child

    int best = -1;
    double best_cos = -2.0, second = -2.0, best_score = -1.0;
    for (int child_id : node.children) {
        const MacroNode& child = tree.node(child_id);
        const double sim = cosine(proposal_embedding, child.desc_embedding);
        const std::string cluster = cluster_key(cluster_family, child.risk_level, child.sigma_disc);
        const double sc = child_score(tree, node_id, child_id, proposal_embedding, cluster,
                                      cfg.alpha, cfg.beta);
        if (sim > best_cos ||
            (sim == best_cos && (sc > best_score || (sc == best_score && child_id < best)))) {
            if (sim > best_cos) second = best_cos;
            best_cos = sim;
            best = child_id;
            best_score = sc;
        } else if (sim > second) {
            second = sim;
        }
    }
    out.s_top1 = best_cos;
    out.s_top2 = second < -1.0 ? 0.0 : second;
    if (best_cos >= cfg.theta_high)
        out.regime = Regime::advance;
    else if (best_cos >= cfg.theta_low)
        out.regime = Regime::fragile;
    else
        out.regime = Regime::explore;
    if (out.regime != Regime::explore) out.child_id = best;
    return out;
}

AllowedResult allowed(const StructuredContext& ctx, bool is_hard, const GateLibrary& lib,
                      const std::vector<Gate>* node_gates, const PayloadClassifier* classifier) {
    AllowedResult out;
    if (!is_hard) return out;  // gating is scoped to T_hard
    out.evaluated = true;
    const GateDecision global = hard_gate_ok(lib, ctx, classifier);
    if (!global.ok) {
        out.ok = false;
        out.verdict = global.first_failure;
        out.gate_id = global.gate_id;
        return out;
    }
    if (node_gates) {
        EvalEnv env{&lib.allowlists, classifier};
        const GateDecision local = node_gate_ok(*node_gates, ctx, env);
        if (!local.ok) {
            out.ok = false;
            out.verdict = local.first_failure;
            out.gate_id = local.gate_id;
            return out;
        }
    }
    return out;
}

int coverage_label(const EpisodeRecord& r) {
    if (!r.family || r.abstained || r.rerooted) return 0;
    for (const auto& s : r.steps) {
        if (s.regime == "explore" || s.regime == "scripted") return 0;
        if ((s.regime == "advance" || s.regime == "fragile") && s.s_top1 < 0.0) return 0;
    }
    return 1;
}

Json spine_context(const EpisodeRecord& r, const GBTree& tree, const SimState& state,
                   int budget_chars) {
    std::string task = r.task_desc;
    Json spine = Json::array();
    for (int id : r.spine) spine.push_back(tree.node(id).description);
    std::string node_summary;
    if (!r.spine.empty()) {
        for (const auto& e : tree.node(r.spine.back()).representative) {
            if (!node_summary.empty()) node_summary += "; ";
            node_summary += coarse_op_of(e.primitive);
            const auto it = e.args.find("path");
            if (it != e.args.end()) node_summary += " " + it->second;
        }
    }
    if (static_cast<int>(node_summary.size()) > budget_chars)
        node_summary.resize(static_cast<std::size_t>(budget_chars));
    // structured safety-critical fields: verbatim, never summarized
    Json structured{{"cwd", state.monitor.workspace_roots.empty()
                               ? "/"
                               : state.monitor.workspace_roots.front()},
                    {"workspace_roots", state.monitor.workspace_roots},
                    {"domain", state.current_domain}};
    Json recent = Json::array();
    int count = 0;
    for (auto it = state.modified_paths.rbegin();
         it != state.modified_paths.rend() && count < 4; ++it, ++count)
        recent.push_back(*it);
    structured["recent_paths"] = recent;
    return Json{{"task_summary", task},
                {"spine", spine},
                {"node_summary", node_summary},
                {"structured", structured}};
}

namespace {

std::int64_t summary_channel_chars(const Json& bundle) {
    std::int64_t total = static_cast<std::int64_t>(bundle.at("task_summary").get<std::string>().size());
    for (const auto& d : bundle.at("spine"))
        total += static_cast<std::int64_t>(d.get<std::string>().size());
    total += static_cast<std::int64_t>(bundle.at("node_summary").get<std::string>().size());
    return total;
}

std::int64_t event_text_size(const Event& e) {
    std::int64_t n = static_cast<std::int64_t>(to_string(e.primitive).size());
    for (const auto& [k, v] : e.args) n += static_cast<std::int64_t>(k.size() + v.size());
    return n;
}

struct LiveEpisode {
    SimState state;
    Trajectory live;
    int next_index = 0;
    bool violation = false;
};

}  // namespace

EpisodeRunner::EpisodeRunner(const GBTree* tree, const GateLibrary* library,
                             const std::vector<FamilyPrototypes>* prototypes, const Config* cfg,
                             const TextEmbedder* embedder, const PayloadClassifier* classifier)
    : tree_(tree),
      library_(library),
      prototypes_(prototypes),
      cfg_(cfg),
      embedder_(embedder),
      classifier_(classifier) {}

EpisodeRecord EpisodeRunner::run(const Scenario& scenario, const ScenarioSet& set,
                                 RunMode mode) const {
    const Config& cfg = *cfg_;
    EpisodeRecord rec;
    rec.scenario_id = scenario.id;
    rec.task_desc = scenario.task_desc;
    rec.mode = to_string(mode);

    LiveEpisode ep;
    ep.state = set.initial_state();
    ep.live.id = scenario.id;
    ep.live.task_desc = scenario.task_desc;

    const bool gbt_mode = mode == RunMode::gbt_basic || mode == RunMode::gbt_se;
    const bool gating = mode != RunMode::native;

    bool traversal = false;
    int current = -1;
    std::string family;
    if (gbt_mode && prototypes_ && !prototypes_->empty()) {
        const RoutingDecision rd =
            route(scenario.task_desc, *prototypes_, cfg.t_fam, cfg.delta_fam, *embedder_);
        rec.p_max = rd.p_max;
        rec.abstained = rd.abstained;
        if (!rd.abstained) {
            const auto it = tree_->family_roots().find(*rd.family);
            if (it != tree_->family_roots().end()) {
                rec.family = rd.family;
                family = *rd.family;
                current = it->second;
                traversal = true;
            } else {
                rec.abstained = true;  // no subtree for this family
            }
        }
    }
    bool covered = traversal;
    int explore_budget = cfg.safe_explore_budget;

    int no_progress_steps = 0;
    std::deque<std::vector<std::string>> block_window;
    Vec prev_proposal_emb;
    bool progress_since_proposal = true;
    std::string stall_reason;

    std::int64_t transcript_bytes = 0;

    CtxOptions base_ctx = cfg.ctx_options();

    // realizes a primitive list under the gating appropriate for `mode`;
    // blocked primitives are skipped and never reach the simulator
    auto realize = [&](const std::vector<Event>& prims, const std::vector<Gate>* node_gates,
                       StepRecord& step, std::vector<std::string>* verdict_sink) {
        const int scope_begin = ep.next_index;
        for (const Event& prim : prims) {
            Event action = prim;
            action.index = ep.next_index;
            action.kind = EventKind::action;
            action.deltas.clear();
            action.verdicts.clear();
            ep.live.events.push_back(action);
            CtxOptions opt = base_ctx;
            opt.scope = std::make_pair(scope_begin, action.index + 1);
            const StructuredContext ctx = build_ctx(ep.live, action.index, opt);
            const RiskClass rc =
                classify_hard(ctx.primitive, ctx.canonical_args, cfg.sensitive_patterns);
            if (rc.is_hard) {
                step.hard_attempts += 1;
                rec.hard_attempts += 1;
            }
            AllowedResult al;
            if (gating && rc.is_hard)
                al = allowed(ctx, true, *library_, node_gates, classifier_);
            if (!al.ok) {
                ep.live.events.pop_back();  // never executed
                step.blocked += 1;
                rec.blocked += 1;
                if (verdict_sink && al.verdict) verdict_sink->push_back(al.verdict->msg);
                if (!block_window.empty()) block_window.back().push_back(to_string(ctx.family));
                continue;
            }
            ep.live.events.pop_back();
            const ApplyResult r = apply(ep.state, action);
            ep.live.events.push_back(r.action);
            ep.live.events.push_back(r.observation);
            ep.next_index = r.observation.index + 1;
            transcript_bytes += event_text_size(r.action) + event_text_size(r.observation);
            if (!r.action.deltas.empty()) step.progressed = true;
            if (!r.verdicts.empty()) ep.violation = true;
            if (rc.is_hard) {
                rec.exec_log.push_back(Json{{"index", r.action.index},
                                            {"primitive", to_string(action.primitive)},
                                            {"allowed_ok", al.ok},
                                            {"gate_evaluated", al.evaluated}});
            }
        }
    };

    auto account_chars = [&]() {
        if (gbt_mode && traversal) {
            rec.chars += summary_channel_chars(spine_context(rec, *tree_, ep.state,
                                                             cfg.context_budget_chars));
        } else {
            rec.chars += transcript_bytes;  // transcript replay
        }
    };

    auto detect_stall = [&](bool plan_loop) -> bool {
        if (rec.stall) return false;
        if (no_progress_steps >= 3) {
            stall_reason = "no_progress";
        } else if (plan_loop) {
            stall_reason = "plan_loop";
        } else {
            std::map<std::string, int> per_family;
            for (const auto& families : block_window)
                for (const auto& f : families) per_family[f] += 1;
            for (const auto& [f, n] : per_family)
                if (n >= 3) {
                    stall_reason = "gate_loop";
                    break;
                }
        }
        if (stall_reason.empty()) return false;
        rec.stall = true;
        return true;
    };

    auto run_recovery = [&]() {
        rec.recovery.invoked = true;
        rec.recovery.stall_reason = stall_reason;
        const EnvSummary env = env_summary(ep.state);
        const int family_root = tree_->family_root_of(current);
        const auto leaves = retrieve_leaves(scenario.task_desc, *tree_, family_root, *embedder_,
                                            cfg.theta_env, env, cfg.leaf_top_k);
        std::vector<int> candidate_ids;
        for (const auto& l : leaves) candidate_ids.push_back(l.node_id);
        rec.recovery.candidates = candidate_ids;
        if (candidate_ids.empty()) return;  // recovery infeasible: safe failure
        const auto plan =
            plan_recovery(*tree_, current, candidate_ids, env, cfg.lambda, cfg.d_max);
        if (!plan) return;  // safe failure, logged for offline coverage expansion
        rec.recovery.path = plan->path;
        rec.recovery.cost = plan->total_cost;
        for (std::size_t i = 1; i < plan->path.size(); ++i) {
            const int node_id = plan->path[i];
            StepRecord step;
            step.regime = "recovery";
            step.node = node_id;
            step.proposal = tree_->node(node_id).description;
            realize(tree_->node(node_id).representative, &tree_->node(node_id).local_gates, step,
                    &rec.recovery.gate_verdicts);
            current = node_id;
            rec.spine.push_back(node_id);
            rec.steps.push_back(step);
            rec.covered_trace.push_back(covered);
            account_chars();
        }
        rec.recovery.completed = true;
    };

    int macro_step = 0;
    for (const auto& unit : scenario.plan) {
        StepRecord step;
        step.proposal = unit.proposal;
        const Vec proposal_emb = embedder_->embed(unit.proposal);

        // plan-loop: an equivalent proposal repeated with no progress between
        bool plan_loop = false;
        if (!prev_proposal_emb.empty() &&
            cosine(prev_proposal_emb, proposal_emb) >= cfg.repeat_proposal_cos &&
            !progress_since_proposal)
            plan_loop = true;
        prev_proposal_emb = proposal_emb;
        progress_since_proposal = false;

        // re-root probe every m macro steps
        if (traversal && macro_step > 0 && macro_step % cfg.reroot_period == 0) {
            std::string summary = scenario.task_desc;
            for (int id : rec.spine) summary += " " + tree_->node(id).description;
            const RerootDecision rd = maybe_reroot(family, summary, *prototypes_, cfg.delta_switch,
                                                   cfg.delta_fam, cfg.t_fam, *embedder_);
            if (rd.reroot) {
                const auto it = tree_->family_roots().find(rd.new_family);
                if (it != tree_->family_roots().end()) {
                    family = rd.new_family;
                    current = it->second;
                    rec.rerooted = true;
                    covered = false;
                }
            }
        }

        block_window.push_back({});
        if (block_window.size() > 5) block_window.pop_front();

        if (traversal) {
            const MatchResult m = match_children(proposal_emb, *tree_, current, family, cfg);
            step.s_top1 = m.s_top1;
            step.s_top2 = m.s_top2;
            step.regime = to_string(m.regime);
            if (m.regime == Regime::explore) {
                covered = false;
                if (explore_budget > 0) {
                    explore_budget -= 1;
                    realize(unit.prims, &tree_->node(current).local_gates, step, nullptr);
                } else {
                    traversal = false;  // traversal claims end; guardrail stays on
                    realize(unit.prims, nullptr, step, nullptr);
                }
            } else {
                current = *m.child_id;
                step.node = current;
                rec.spine.push_back(current);
                realize(tree_->node(current).representative, &tree_->node(current).local_gates,
                        step, nullptr);
            }
        } else {
            step.regime = "scripted";
            realize(unit.prims, nullptr, step, nullptr);
        }

        if (step.progressed) {
            no_progress_steps = 0;
            progress_since_proposal = true;
        } else {
            no_progress_steps += 1;
        }

        rec.steps.push_back(step);
        rec.covered_trace.push_back(covered);
        account_chars();
        macro_step += 1;

        if (detect_stall(plan_loop) && traversal && gbt_mode) {
            run_recovery();
            break;  // the episode concludes with the recovery outcome
        }
    }

    rec.success = goal_met(scenario.goal, ep.state);
    rec.violation = ep.violation;
    rec.unsafe_success = rec.success && rec.violation;
    rec.covered = covered && rec.family.has_value();
    if (rec.recovery.invoked && rec.recovery.completed) {
        // recovery success is defined against benchmark success
    }
    return rec;
}

Json to_json(const EpisodeRecord& r) {
    Json steps = Json::array();
    for (const auto& s : r.steps) {
        steps.push_back(Json{{"proposal", s.proposal},
                             {"regime", s.regime},
                             {"s_top1", s.s_top1},
                             {"s_top2", s.s_top2},
                             {"node", s.node},
                             {"progressed", s.progressed},
                             {"hard_attempts", s.hard_attempts},
                             {"blocked", s.blocked}});
    }
    Json recovery{{"invoked", r.recovery.invoked},
                  {"stall_reason", r.recovery.stall_reason},
                  {"candidates", r.recovery.candidates},
                  {"path", r.recovery.path},
                  {"cost", r.recovery.cost},
                  {"completed", r.recovery.completed},
                  {"gate_verdicts", r.recovery.gate_verdicts}};
    return Json{{"scenario_id", r.scenario_id},
                {"task_desc", r.task_desc},
                {"mode", r.mode},
                {"family", r.family ? Json(*r.family) : Json(nullptr)},
                {"p_max", r.p_max},
                {"abstained", r.abstained},
                {"rerooted", r.rerooted},
                {"spine", r.spine},
                {"steps", steps},
                {"covered_trace", r.covered_trace},
                {"covered", r.covered},
                {"success", r.success},
                {"violation", r.violation},
                {"unsafe_success", r.unsafe_success},
                {"hard_attempts", r.hard_attempts},
                {"blocked", r.blocked},
                {"stall", r.stall},
                {"recovery", recovery},
                {"chars", r.chars},
                {"error", r.error},
                {"exec_log", r.exec_log}};
}

EpisodeRecord episode_from_json(const Json& j) {
    EpisodeRecord r;
    r.scenario_id = j.at("scenario_id").get<std::string>();
    r.task_desc = j.at("task_desc").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    if (!j.at("family").is_null()) r.family = j.at("family").get<std::string>();
    r.p_max = j.at("p_max").get<double>();
    r.abstained = j.at("abstained").get<bool>();
    r.rerooted = j.at("rerooted").get<bool>();
    r.spine = j.at("spine").get<std::vector<int>>();
    for (const auto& s : j.at("steps")) {
        StepRecord step;
        step.proposal = s.at("proposal").get<std::string>();
        step.regime = s.at("regime").get<std::string>();
        step.s_top1 = s.at("s_top1").get<double>();
        step.s_top2 = s.at("s_top2").get<double>();
        step.node = s.at("node").get<int>();
        step.progressed = s.at("progressed").get<bool>();
        step.hard_attempts = s.at("hard_attempts").get<int>();
        step.blocked = s.at("blocked").get<int>();
        r.steps.push_back(step);
    }
    r.covered_trace = j.at("covered_trace").get<std::vector<bool>>();
    r.covered = j.at("covered").get<bool>();
    r.success = j.at("success").get<bool>();
    r.violation = j.at("violation").get<bool>();
    r.unsafe_success = j.at("unsafe_success").get<bool>();
    r.hard_attempts = j.at("hard_attempts").get<int>();
    r.blocked = j.at("blocked").get<int>();
    r.stall = j.at("stall").get<bool>();
    const auto& rec = j.at("recovery");
    r.recovery.invoked = rec.at("invoked").get<bool>();
    r.recovery.stall_reason = rec.at("stall_reason").get<std::string>();
    r.recovery.candidates = rec.at("candidates").get<std::vector<int>>();
    r.recovery.path = rec.at("path").get<std::vector<int>>();
    r.recovery.cost = rec.at("cost").get<double>();
    r.recovery.completed = rec.at("completed").get<bool>();
    r.recovery.gate_verdicts = rec.at("gate_verdicts").get<std::vector<std::string>>();
    r.chars = j.at("chars").get<std::int64_t>();
    r.error = j.at("error").get<std::string>();
    r.exec_log = j.at("exec_log").get<std::vector<Json>>();
    return r;
}

Json aggregate_report(const std::vector<EpisodeRecord>& episodes) {
    const double n = std::max<std::size_t>(episodes.size(), 1);
    double sr = 0, cov = 0, viol = 0, usucc = 0, hard = 0, blocked = 0, stall = 0, chars = 0;
    double stalled = 0, rec_succ = 0;
    for (const auto& e : episodes) {
        sr += e.success;
        cov += e.covered;
        viol += e.violation;
        usucc += e.unsafe_success;
        hard += e.hard_attempts;
        blocked += e.blocked;
        stall += e.stall;
        chars += static_cast<double>(e.chars);
        if (e.stall) {
            stalled += 1;
            if (e.recovery.invoked && e.success) rec_succ += 1;
        }
    }
    return Json{{"episodes", episodes.size()},
                {"sr", sr / n},
                {"cov", cov / n},
                {"viol", viol / n},
                {"usucc", usucc / n},
                {"hard", hard / n},
                {"blocked", blocked / n},
                {"stall", stall / n},
                {"rec_succ", stalled > 0 ? rec_succ / stalled : 0.0},
                {"chars", chars / n}};
}

Json RunReport::to_json() const {
    Json eps = Json::array();
    for (const auto& e : episodes) eps.push_back(gbt::to_json(e));
    return Json{{"mode", mode},
                {"seed", seed},
                {"episodes", eps},
                {"aggregates", aggregate_report(episodes)}};
}

}  // namespace gbt
