#include "gbt/miner.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "gbt/util.hpp"

namespace gbt {

UnsafeWindow shrink_window(const Replayer& replayer, const CtxOptions& ctx_opt) {
    const auto& actions = replayer.action_indices();
    const Trajectory& t = replayer.trajectory();
    if (actions.empty()) throw MiningError("empty trajectory: " + t.id);
    if (!replayer.window_violates(actions.front(), actions.back()))
        throw MiningError("verdict not reproducible under replay: " + t.id);

    // earliest violating prefix end; prefix violation is monotone in the end
    std::size_t lo = 0, hi = actions.size() - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (replayer.window_violates(actions.front(), actions[mid]))
            hi = mid;
        else
            lo = mid + 1;
    }
    const std::size_t t1 = lo;

    // advance the start while the violation persists
    std::size_t t0 = 0;
    while (t0 + 1 <= t1 && replayer.window_violates(actions[t0 + 1], actions[t1])) ++t0;

    // boundary-removal probes
    if (t0 + 1 <= t1 && replayer.window_violates(actions[t0 + 1], actions[t1]))
        throw MiningError("start boundary removable: " + t.id);
    if (t0 <= t1 && t1 > t0 && replayer.window_violates(actions[t0], actions[t1 - 1]))
        throw MiningError("end boundary removable: " + t.id);

    UnsafeWindow w;
    w.trajectory_id = t.id;
    w.start_index = actions[t0];
    w.end_index = actions[t1];
    for (const auto& v : replayer.window_verdicts(w.start_index, w.end_index))
        w.verdict_ids.push_back(v.verdict_id);

    CtxOptions opt = ctx_opt;
    opt.scope = std::make_pair(w.start_index, w.end_index + 1);
    for (int idx : actions) {
        if (idx < w.start_index || idx > w.end_index) continue;
        const auto it = std::find_if(t.events.begin(), t.events.end(),
                                     [&](const Event& e) { return e.index == idx; });
        const RiskClass rc = classify_hard(it->primitive, it->args, opt.sensitive_patterns);
        if (!rc.is_hard) continue;
        w.contexts.push_back(build_ctx(t, idx, opt));
    }
    return w;
}

std::pair<int, int> map_window_to_macros(const UnsafeWindow& window,
                                         const std::vector<std::pair<int, int>>& spans) {
    int first = -1, last = -1;
    for (std::size_t k = 0; k < spans.size(); ++k) {
        const auto& [s, e] = spans[k];
        const bool overlaps = window.start_index <= e && window.end_index >= s;
        if (overlaps) {
            if (first == -1) first = static_cast<int>(k);
            last = static_cast<int>(k);
        }
    }
    if (first == -1) throw MiningError("window outside all spans");
    return {first, last};
}

namespace {

// gate whose expression never matches; propose_update against it reduces to
// the coverage + benign-budget check for brand-new gates
Gate never_gate() {
    Gate g;
    g.id = "__none__";
    g.expr = make_field_equals("primitive_type", "__never__");
    return g;
}

struct Candidate {
    GateExpr expr;
    int specificity;  // lower = more specific, ordering key
    std::string key;  // dedup + deterministic tie order
};

std::string parent_dir(const std::string& path) {
    const auto pos = path.rfind('/');
    if (pos == std::string::npos || pos == 0) return "/";
    return path.substr(0, pos);
}

std::vector<Candidate> make_candidates(const std::vector<StructuredContext>& contexts) {
    std::vector<Candidate> out;
    std::set<std::string> seen;
    auto add = [&](GateExpr e, int spec, std::string key) {
        if (!seen.insert(key).second) return;
        out.push_back(Candidate{std::move(e), spec, std::move(key)});
    };

    for (const auto& ctx : contexts) {
        const std::string pt = to_string(ctx.primitive);
        const std::string resource = primary_resource(ctx.primitive, ctx.canonical_args);
        switch (category_of_hard_primitive(ctx.primitive)) {
            case RiskCategory::write_delete:
            case RiskCategory::sensitive_read: {
                if (resource.empty()) break;
                add(make_and({make_field_equals("primitive_type", pt),
                              make_field_equals("canonical_args.path", resource)}),
                    0, "exact|" + pt + "|" + resource);
                add(make_and({make_field_equals("primitive_type", pt),
                              make_path_matches("canonical_args.path", parent_dir(resource) + "/*")}),
                    1, "prefix|" + pt + "|" + parent_dir(resource));
                bool outside = true;
                for (const auto& r : ctx.workspace_roots)
                    outside = outside && !path_has_root(resource, r);
                if (outside && ctx.primitive != PrimitiveType::file_read)
                    add(make_and({make_or({make_field_equals("primitive_type", "file_write"),
                                           make_field_equals("primitive_type", "file_delete")}),
                                  make_not(make_path_under_roots("canonical_args.path"))}),
                        2, "outside_roots");
                break;
            }
            case RiskCategory::net_send: {
                // an exfiltration chain in the bounded history is the more
                // specific signal; a bare destination pin is the fallback
                bool motif = false;
                const auto src = ctx.canonical_args.find("src");
                if (src != ctx.canonical_args.end()) {
                    bool saw_read = false;
                    for (const auto& h : ctx.recent_hard_history) {
                        if (category_of_hard_primitive(h.type) == RiskCategory::sensitive_read)
                            saw_read = true;
                        if (saw_read &&
                            category_of_hard_primitive(h.type) == RiskCategory::write_delete &&
                            h.resource == src->second)
                            motif = true;
                    }
                }
                if (motif)
                    add(make_motif({MotifStep{RiskCategory::sensitive_read, false},
                                    MotifStep{RiskCategory::write_delete, true},
                                    MotifStep{RiskCategory::net_send, true}}),
                        0, "exfil_motif");
                if (ctx.net_dest && !ctx.net_dest->domain.empty())
                    add(make_and({make_field_equals("primitive_type", "net_send"),
                                  make_field_equals("net_dest.domain", ctx.net_dest->domain)}),
                        1, "domain|" + ctx.net_dest->domain);
                break;
            }
            case RiskCategory::proc_spawn: {
                if (ctx.proc_meta && !ctx.proc_meta->executable.empty())
                    add(make_and({make_field_equals("primitive_type", "proc_spawn"),
                                  make_field_equals("proc_meta.executable",
                                                    ctx.proc_meta->executable)}),
                        0, "exe|" + ctx.proc_meta->executable);
                break;
            }
            case RiskCategory::none:
                break;
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        if (a.specificity != b.specificity) return a.specificity < b.specificity;
        return a.key < b.key;
    });
    return out;
}

}  // namespace

SynthesisResult synthesize_node_gates(const std::vector<StructuredContext>& contexts,
                                      const std::vector<StructuredContext>& benign_corpus,
                                      double eps_benign, const std::string& id_prefix,
                                      const EvalEnv& env) {
    SynthesisResult result;
    if (contexts.empty()) return result;

    // one gate per risk category present in the positives
    std::map<RiskCategory, std::vector<StructuredContext>> groups;
    for (const auto& ctx : contexts)
        groups[category_of_hard_primitive(ctx.primitive)].push_back(ctx);

    int gate_seq = 0;
    for (const auto& [category, positives] : groups) {
        if (category == RiskCategory::none) continue;
        const auto candidates = make_candidates(positives);
        std::vector<GateExpr> chosen;
        std::vector<bool> covered(positives.size(), false);
        auto rejects = [&](const GateExpr& e, const StructuredContext& ctx) {
            const EvalOutcome r = eval_expr(e, ctx, env);
            return !r.ok() || r.value;
        };
        for (const auto& cand : candidates) {
            bool helps = false;
            for (std::size_t i = 0; i < positives.size(); ++i)
                if (!covered[i] && rejects(cand.expr, positives[i])) helps = true;
            if (!helps) continue;
            // benign budget check on the accumulated disjunction
            std::vector<GateExpr> trial = chosen;
            trial.push_back(cand.expr);
            const GateExpr trial_expr = trial.size() == 1 ? trial.front() : make_or(trial);
            if (!benign_corpus.empty()) {
                std::size_t fp = 0;
                for (const auto& b : benign_corpus)
                    if (rejects(trial_expr, b)) ++fp;
                if (static_cast<double>(fp) / static_cast<double>(benign_corpus.size()) >
                    eps_benign)
                    continue;  // candidate discarded, try a more general one
            }
            chosen = std::move(trial);
            for (std::size_t i = 0; i < positives.size(); ++i)
                covered[i] = covered[i] || rejects(cand.expr, positives[i]);
            if (std::all_of(covered.begin(), covered.end(), [](bool c) { return c; })) break;
        }
        if (chosen.empty() ||
            !std::all_of(covered.begin(), covered.end(), [](bool c) { return c; })) {
            result.failures.push_back(to_string(category));
            continue;
        }
        Gate g;
        g.id = id_prefix + "_" + to_string(category) + std::to_string(gate_seq++);
        g.expr = chosen.size() == 1 ? chosen.front() : make_or(chosen);
        g.message_template = "blocked {primitive} on {resource}: mined unsafe pattern ({gate})";
        for (const auto& ctx : positives)
            g.corpus_refs.push_back(ctx.trajectory_id + ":" + std::to_string(ctx.event_index));
        const UpdateCheck check =
            propose_update(never_gate(), g, positives, benign_corpus, eps_benign, env);
        if (!check.accepted) {
            result.failures.push_back(to_string(category) + ": " + check.reason);
            continue;
        }
        result.gates.push_back(std::move(g));
    }
    return result;
}

Json to_json(const CorpusEntry& e) {
    return Json{{"ctx", to_json(e.ctx)},
                {"window", Json::array({e.window_start, e.window_end})},
                {"mapped_nodes", e.mapped_nodes},
                {"gated", e.gated}};
}

CorpusEntry corpus_entry_from_json(const Json& j) {
    CorpusEntry e;
    e.ctx = ctx_from_json(j.at("ctx"));
    e.window_start = j.at("window")[0].get<int>();
    e.window_end = j.at("window")[1].get<int>();
    e.mapped_nodes = j.value("mapped_nodes", std::vector<int>{});
    e.gated = j.value("gated", false);
    return e;
}

void save_corpus(const std::vector<CorpusEntry>& corpus, const std::string& file) {
    Json arr = Json::array();
    for (const auto& e : corpus) arr.push_back(to_json(e));
    std::ofstream out(file);
    if (!out) throw MiningError("cannot write " + file);
    out << dump_canonical(arr);
}

std::vector<CorpusEntry> load_corpus(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw MiningError("cannot open " + file);
    std::vector<CorpusEntry> out;
    for (const auto& e : Json::parse(in)) out.push_back(corpus_entry_from_json(e));
    return out;
}

}  // namespace gbt
