#include "gbt/recovery.hpp"

#include <algorithm>
#include <queue>

#include "gbt/util.hpp"

namespace gbt {

Vec env_signature_vector(const EnvSummary& env) {
    Vec v(kEnvSignatureDim, 0.0);
    if (!env.domain.empty()) v[fnv1a64(env.domain) % 16] = 1.0;
    for (const auto& f : env.files) v[16 + fnv1a64(f) % 32] += 1.0;
    for (const auto& t : env.tools) v[48 + fnv1a64(t) % 8] = 1.0;
    auto count = [&](const char* cat) {
        const auto it = env.risk_counts.find(cat);
        return it == env.risk_counts.end() ? 0 : it->second;
    };
    v[56] = count("write_delete");
    v[57] = count("proc_spawn");
    v[58] = count("net_send");
    v[59] = count("sensitive_read");
    l2_normalize(v);
    return v;
}

bool precondition_holds(const MacroNode& node, const EnvSummary& env) {
    if (!node.precondition) return true;
    const EvalOutcome r = eval_env_expr(*node.precondition, env);
    return r.ok() && r.value;  // conservative: errors reject
}

double edge_cost(double lambda, int risk_level) { return 1.0 + lambda * risk_level; }

std::vector<LeafCandidate> retrieve_leaves(const std::string& task_desc, const GBTree& tree,
                                           int family_root, const TextEmbedder& embedder,
                                           double theta_env, const EnvSummary& env_now,
                                           int top_k) {
    const Vec task_emb = embedder.embed(task_desc);
    const Vec env_sig = env_signature_vector(env_now);
    std::vector<LeafCandidate> out;
    for (int id : tree.success_leaves_under(family_root)) {
        const MacroNode& leaf = tree.node(id);
        if (!leaf.env_signature) continue;
        LeafCandidate c;
        c.node_id = id;
        c.desc_sim = cosine(task_emb, leaf.desc_embedding);
        c.env_sim = cosine(env_sig, *leaf.env_signature);
        if (c.env_sim < theta_env) continue;
        out.push_back(c);
    }
    std::sort(out.begin(), out.end(), [](const LeafCandidate& a, const LeafCandidate& b) {
        if (a.desc_sim != b.desc_sim) return a.desc_sim > b.desc_sim;
        return a.node_id < b.node_id;  // ties: lower node id first
    });
    if (top_k > 0 && out.size() > static_cast<std::size_t>(top_k))
        out.resize(static_cast<std::size_t>(top_k));
    return out;
}

std::optional<RecoveryPlan> plan_recovery(const GBTree& tree, int current_node,
                                          const std::vector<int>& candidate_leaves,
                                          const EnvSummary& env, double lambda, int d_max) {
    if (candidate_leaves.empty()) return std::nullopt;
    if (!precondition_holds(tree.node(current_node), env)) return std::nullopt;

    const int family_root = tree.family_root_of(current_node);
    const std::vector<int> scope = tree.subtree_of(family_root);
    const std::set<int> in_scope(scope.begin(), scope.end());
    const std::set<int> targets(candidate_leaves.begin(), candidate_leaves.end());

    auto neighbors = [&](int id) {
        std::vector<int> out;
        const MacroNode& n = tree.node(id);
        if (n.parent_id != -1 && in_scope.count(n.parent_id)) out.push_back(n.parent_id);
        for (int c : n.children)
            if (in_scope.count(c)) out.push_back(c);
        std::sort(out.begin(), out.end());
        return out;
    };

    struct State {
        double cost;
        std::vector<int> path;  // path.front() == current_node
        int node;
        int depth;
    };
    auto worse = [](const State& a, const State& b) {
        if (a.cost != b.cost) return a.cost > b.cost;
        return a.path > b.path;
    };
    std::priority_queue<State, std::vector<State>, decltype(worse)> queue(worse);
    // best (cost, path) per (node, depth)
    std::map<std::pair<int, int>, std::pair<double, std::vector<int>>> best;

    const State start{0.0, {current_node}, current_node, 0};
    queue.push(start);
    best[{current_node, 0}] = {0.0, start.path};

    std::optional<State> answer;
    while (!queue.empty()) {
        const State s = queue.top();
        queue.pop();
        const auto key = std::make_pair(s.node, s.depth);
        const auto it = best.find(key);
        if (it != best.end() &&
            (it->second.first < s.cost ||
             (it->second.first == s.cost && it->second.second < s.path)))
            continue;  // stale entry
        if (answer && s.cost > answer->cost) break;  // no better goal can pop now
        if (targets.count(s.node)) {
            if (!answer || s.cost < answer->cost ||
                (s.cost == answer->cost && s.path < answer->path))
                answer = s;
        }
        if (s.depth == d_max) continue;
        for (int next : neighbors(s.node)) {
            if (std::find(s.path.begin(), s.path.end(), next) != s.path.end())
                continue;  // simple paths only
            if (!precondition_holds(tree.node(next), env)) continue;
            State n;
            n.cost = s.cost + edge_cost(lambda, tree.node(next).risk_level);
            n.path = s.path;
            n.path.push_back(next);
            n.node = next;
            n.depth = s.depth + 1;
            const auto nkey = std::make_pair(n.node, n.depth);
            const auto bit = best.find(nkey);
            if (bit == best.end() || n.cost < bit->second.first ||
                (n.cost == bit->second.first && n.path < bit->second.second)) {
                best[nkey] = {n.cost, n.path};
                queue.push(n);
            }
        }
    }
    if (!answer) return std::nullopt;
    return RecoveryPlan{answer->path, answer->cost};
}

}  // namespace gbt
