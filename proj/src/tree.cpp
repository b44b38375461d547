#include "gbt/tree.hpp"

#include <algorithm>
#include <fstream>

#include "gbt/util.hpp"

namespace gbt {

GBTree::GBTree() {
    MacroNode root;
    root.node_id = 0;
    root.parent_id = -1;
    root.description = "root";
    nodes_[0] = std::move(root);
}

const MacroNode& GBTree::node(int id) const {
    const auto it = nodes_.find(id);
    if (it == nodes_.end()) throw TreeError("unknown node " + std::to_string(id));
    return it->second;
}

MacroNode& GBTree::node_mut(int id) {
    const auto it = nodes_.find(id);
    if (it == nodes_.end()) throw TreeError("unknown node " + std::to_string(id));
    return it->second;
}

int GBTree::ensure_family_root(const std::string& family) {
    const auto it = family_roots_.find(family);
    if (it != family_roots_.end()) return it->second;
    MacroNode n;
    n.node_id = fresh_id();
    n.parent_id = 0;
    n.description = "family: " + family;
    n.tags = {family};
    nodes_[n.node_id] = n;
    nodes_[0].children.push_back(n.node_id);
    family_roots_[family] = n.node_id;
    bump_version(Json{{"op", "family_root"}, {"family", family}, {"node", n.node_id}});
    return n.node_id;
}

MergeDecision GBTree::try_merge(int parent_id, const MacroSpan& candidate,
                                const Vec& candidate_embedding, const MergeThresholds& th) const {
    const MacroNode& parent = node(parent_id);
    MergeDecision best;
    for (int child_id : parent.children) {
        const MacroNode& u = node(child_id);
        if (u.has_gates()) continue;  // merges into gated nodes are disallowed
        if (!(u.sigma_disc == candidate.sigma_disc)) continue;
        if (cosine(u.sigma_cont, candidate.sigma_cont) < th.theta_sig) continue;
        const double desc_sim = cosine(u.desc_embedding, candidate_embedding);
        if (desc_sim < th.theta_merge) continue;
        if (!best.merge || desc_sim > best.desc_sim ||
            (desc_sim == best.desc_sim && child_id < best.child_id)) {
            best.merge = true;
            best.child_id = child_id;
            best.desc_sim = desc_sim;
        }
    }
    return best;
}

namespace {

Vec mean_renormalized(const std::vector<Vec>& vs) {
    if (vs.empty()) return {};
    Vec out(vs.front().size(), 0.0);
    for (const auto& v : vs)
        for (std::size_t i = 0; i < out.size() && i < v.size(); ++i) out[i] += v[i];
    for (double& x : out) x /= static_cast<double>(vs.size());
    l2_normalize(out);
    return out;
}

constexpr std::size_t kMaxTaskDescs = 4;

}  // namespace

InsertResult GBTree::insert_path(const std::string& family,
                                 const std::vector<MacroCandidate>& macros, bool success,
                                 const std::optional<Vec>& env_signature,
                                 const std::string& task_desc, const MergeThresholds& th,
                                 const TextEmbedder& embedder) {
    InsertResult result;
    int current = ensure_family_root(family);
    for (const auto& macro : macros) {
        const Vec emb = embedder.embed(macro.span.description);
        const MergeDecision dec = try_merge(current, macro.span, emb, th);
        if (dec.merge) {
            MacroNode& u = node_mut(dec.child_id);
            u.constituents += 1;
            u.constituent_sigs.push_back(macro.span.sigma_cont);
            result.steps.push_back({"merge", dec.child_id});
            current = dec.child_id;
        } else {
            MacroNode payload;
            payload.parent_id = current;
            payload.description = macro.span.description;
            payload.tags = macro.span.tags;
            payload.risk_level = macro.span.risk.risk_level;
            payload.sigma_disc = macro.span.sigma_disc;
            payload.sigma_cont = macro.span.sigma_cont;
            payload.representative = macro.representative;
            payload.constituents = 1;
            payload.constituent_sigs.push_back(macro.span.sigma_cont);
            payload.node_id = fresh_id();
            payload.desc_embedding = emb;
            nodes_[payload.node_id] = payload;
            nodes_[current].children.push_back(payload.node_id);
            result.steps.push_back({"new", payload.node_id});
            result.new_nodes += 1;
            current = payload.node_id;
        }
        result.path_nodes.push_back(current);
    }
    if (success && !result.path_nodes.empty()) {
        MacroNode& leaf = node_mut(result.path_nodes.back());
        leaf.is_success_leaf = true;
        if (env_signature) {
            if (leaf.env_signature) {
                leaf.env_signature = mean_renormalized({*leaf.env_signature, *env_signature});
            } else {
                leaf.env_signature = env_signature;
            }
        }
        if (!task_desc.empty() && leaf.task_descs.size() < kMaxTaskDescs &&
            std::find(leaf.task_descs.begin(), leaf.task_descs.end(), task_desc) ==
                leaf.task_descs.end())
            leaf.task_descs.push_back(task_desc);
    }

    Json steps = Json::array();
    for (const auto& s : result.steps) steps.push_back(Json{{"action", s.action}, {"node", s.node_id}});
    bump_version(Json{{"op", "insert_path"}, {"family", family}, {"success", success}, {"steps", steps}});
    validate();
    return result;
}

std::optional<Json> GBTree::audit_split(int node_id, int traffic_threshold, double theta_sig) {
    MacroNode& n = node_mut(node_id);
    if (n.has_gates()) return std::nullopt;  // ineligible
    if (n.constituents < traffic_threshold) return std::nullopt;
    const auto& sigs = n.constituent_sigs;
    if (sigs.size() < 2) return std::nullopt;

    // connected components of the >=theta_sig similarity graph
    std::vector<int> comp(sigs.size(), -1);
    int n_comps = 0;
    for (std::size_t i = 0; i < sigs.size(); ++i) {
        if (comp[i] != -1) continue;
        const int c = n_comps++;
        std::vector<std::size_t> stack{i};
        comp[i] = c;
        while (!stack.empty()) {
            const std::size_t a = stack.back();
            stack.pop_back();
            for (std::size_t b = 0; b < sigs.size(); ++b) {
                if (comp[b] == -1 && cosine(sigs[a], sigs[b]) >= theta_sig) {
                    comp[b] = c;
                    stack.push_back(b);
                }
            }
        }
    }
    if (n_comps < 2) return std::nullopt;

    std::vector<std::vector<Vec>> comp_sigs(static_cast<std::size_t>(n_comps));
    for (std::size_t i = 0; i < sigs.size(); ++i)
        comp_sigs[static_cast<std::size_t>(comp[i])].push_back(sigs[i]);
    std::vector<Vec> centroids;
    for (const auto& cs : comp_sigs) centroids.push_back(mean_renormalized(cs));

    // children follow the most similar cluster centroid
    std::vector<std::vector<int>> child_partition(static_cast<std::size_t>(n_comps));
    for (int child : n.children) {
        const Vec& sig = node(child).sigma_cont;
        std::size_t best = 0;
        double best_cos = -2.0;
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            const double cs = cosine(sig, centroids[c]);
            if (cs > best_cos) {
                best_cos = cs;
                best = c;
            }
        }
        child_partition[best].push_back(child);
    }

    std::vector<int> sibling_ids{node_id};
    const MacroNode original = n;
    // first cluster stays on the original node
    n.sigma_cont = centroids[0];
    n.constituent_sigs = comp_sigs[0];
    n.constituents = static_cast<int>(comp_sigs[0].size());
    n.children = child_partition[0];
    n.selection_stats.clear();

    for (std::size_t c = 1; c < comp_sigs.size(); ++c) {
        MacroNode sib;
        sib.node_id = fresh_id();
        sib.parent_id = original.parent_id;
        sib.description = original.description;
        sib.tags = original.tags;
        sib.risk_level = original.risk_level;
        sib.sigma_disc = original.sigma_disc;
        sib.sigma_cont = centroids[c];
        sib.constituent_sigs = comp_sigs[c];
        sib.constituents = static_cast<int>(comp_sigs[c].size());
        sib.children = child_partition[c];
        sib.is_success_leaf = original.is_success_leaf;
        sib.env_signature = original.env_signature;
        sib.representative = original.representative;
        sib.task_descs = original.task_descs;
        sib.desc_embedding = original.desc_embedding;
        for (int child : sib.children) node_mut(child).parent_id = sib.node_id;
        nodes_[sib.node_id] = sib;
        nodes_[original.parent_id].children.push_back(sib.node_id);
        sibling_ids.push_back(sib.node_id);
    }

    // counters follow the sibling that now parents the child; totals preserved
    for (const auto& [child, clusters] : original.selection_stats) {
        const std::size_t owner_idx = [&] {
            for (std::size_t c = 0; c < child_partition.size(); ++c)
                if (std::find(child_partition[c].begin(), child_partition[c].end(), child) !=
                    child_partition[c].end())
                    return c;
            return std::size_t{0};
        }();
        auto& dest = node_mut(sibling_ids[owner_idx]).selection_stats;
        for (const auto& [cluster, stats] : clusters) dest[child][cluster] = stats;
    }

    Json record{{"op", "split"}, {"node", node_id}, {"siblings", sibling_ids}, {"clusters", n_comps}};
    bump_version(record);
    validate();
    return record;
}

bool GBTree::attach_existing(int parent_id, int child_id) {
    if (!has_node(parent_id) || !has_node(child_id)) return false;
    if (child_id == root_id()) return false;
    // a second edge would break the tree, an ancestor edge would close a cycle
    if (node(child_id).parent_id != -1) return false;
    if (is_ancestor(child_id, parent_id)) return false;
    nodes_[parent_id].children.push_back(child_id);
    node_mut(child_id).parent_id = parent_id;
    bump_version(Json{{"op", "attach"}, {"parent", parent_id}, {"node", child_id}});
    validate();
    return true;
}

int GBTree::add_child(int parent_id, MacroNode payload, const TextEmbedder& embedder,
                      const std::string& audit_op) {
    if (!has_node(parent_id)) throw TreeError("unknown parent " + std::to_string(parent_id));
    payload.node_id = fresh_id();
    payload.parent_id = parent_id;
    if (payload.constituents == 0) payload.constituents = 1;
    if (payload.constituent_sigs.empty()) payload.constituent_sigs.push_back(payload.sigma_cont);
    payload.children.clear();
    payload.desc_embedding = embedder.embed(payload.description);
    nodes_[payload.node_id] = payload;
    nodes_[parent_id].children.push_back(payload.node_id);
    bump_version(Json{{"op", audit_op}, {"parent", parent_id}, {"node", payload.node_id}});
    validate();
    return payload.node_id;
}

void GBTree::add_node_gate(int node_id, Gate gate) {
    gate.scope = GateScope::node_local;
    gate.node_id = node_id;
    MacroNode& n = node_mut(node_id);
    for (const auto& g : n.local_gates)
        if (g.id == gate.id) throw TreeError("duplicate gate id " + gate.id);
    n.local_gates.push_back(std::move(gate));
    bump_version(Json{{"op", "attach_gate"}, {"node", node_id}, {"gate", n.local_gates.back().id}});
}

void GBTree::set_precondition(int node_id, GateExpr expr) {
    validate_expr(expr, false);
    node_mut(node_id).precondition = std::move(expr);
}

void GBTree::record_outcome(int parent_id, int child_id, const std::string& cluster_key,
                            bool success) {
    MacroNode& p = node_mut(parent_id);
    NodeStats& s = p.selection_stats[child_id][cluster_key];
    if (success)
        s.succ += 1;
    else
        s.fail += 1;
}

bool GBTree::is_ancestor(int ancestor, int descendant) const {
    int cur = descendant;
    while (cur != -1) {
        if (cur == ancestor) return true;
        cur = node(cur).parent_id;
    }
    return false;
}

std::vector<int> GBTree::path_from_root(int node_id) const {
    std::vector<int> path;
    int cur = node_id;
    while (cur != -1) {
        path.push_back(cur);
        cur = node(cur).parent_id;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

int GBTree::family_root_of(int node_id) const {
    const auto path = path_from_root(node_id);
    if (path.size() < 2) return root_id();
    return path[1];
}

std::vector<int> GBTree::subtree_of(int node_id) const {
    std::vector<int> out;
    std::vector<int> stack{node_id};
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        out.push_back(id);
        for (int c : node(id).children) stack.push_back(c);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> GBTree::success_leaves_under(int node_id) const {
    std::vector<int> out;
    for (int id : subtree_of(node_id))
        if (node(id).is_success_leaf) out.push_back(id);
    return out;
}

std::vector<const Gate*> GBTree::all_node_gates() const {
    std::vector<const Gate*> out;
    for (const auto& [id, n] : nodes_)
        for (const auto& g : n.local_gates) out.push_back(&g);
    return out;
}

std::string GBTree::gate_safety_hash() const {
    std::uint64_t h = fnv1a64("node-gates");
    for (const Gate* g : all_node_gates()) {
        h = fnv1a64(g->id, h);
        h = fnv1a64(print_expr(g->expr), h);
    }
    return to_hex(h);
}

void GBTree::validate() const {
    if (!nodes_.count(0)) throw TreeError("missing root");
    // parent/child consistency + single parent
    std::map<int, int> seen_parent;
    for (const auto& [id, n] : nodes_) {
        if (id != n.node_id) throw TreeError("node id mismatch");
        if (id == 0) {
            if (n.parent_id != -1) throw TreeError("root must have no parent");
        } else {
            if (!nodes_.count(n.parent_id)) throw TreeError("dangling parent pointer");
            const auto& siblings = nodes_.at(n.parent_id).children;
            if (std::count(siblings.begin(), siblings.end(), id) != 1)
                throw TreeError("parent/child lists inconsistent (acyclicity/connectivity)");
        }
        for (int c : n.children) {
            if (!nodes_.count(c)) throw TreeError("dangling child pointer");
            if (seen_parent.count(c)) throw TreeError("node has two parents (acyclicity/connectivity)");
            seen_parent[c] = id;
            if (nodes_.at(c).parent_id != id)
                throw TreeError("child parent pointer mismatch (acyclicity/connectivity)");
        }
    }
    // reachability: walking from the root must visit every node exactly once
    std::vector<int> reach = subtree_of(0);
    if (reach.size() != nodes_.size())
        throw TreeError("unreachable nodes (acyclicity/connectivity)");
    for (const auto& [family, id] : family_roots_) {
        if (!nodes_.count(id)) throw TreeError("family root missing: " + family);
        if (nodes_.at(id).parent_id != 0) throw TreeError("family root not under root");
    }
    for (const auto& [id, n] : nodes_) {
        if (n.is_success_leaf && !n.env_signature)
            throw TreeError("success leaf without env signature: " + std::to_string(id));
        for (const auto& g : n.local_gates) {
            const std::string txt = print_expr(g.expr);
            if (print_expr(parse_expr(txt)) != txt)
                throw TreeError("gate round-trip failure on node " + std::to_string(id));
        }
    }
}

void GBTree::bump_version(const Json& audit_record) {
    version_ += 1;
    Json rec = audit_record;
    rec["version"] = version_;
    audit_log_.push_back(std::move(rec));
}

Json node_to_json(const MacroNode& n) {
    Json j{{"node_id", n.node_id},
           {"parent_id", n.parent_id},
           {"description", n.description},
           {"tags", n.tags},
           {"risk_level", n.risk_level},
           {"sigma_disc",
            Json{{"family_counts", n.sigma_disc.family_counts},
                 {"resource_kinds",
                  std::vector<std::string>(n.sigma_disc.resource_kinds.begin(),
                                           n.sigma_disc.resource_kinds.end())},
                 {"hard_touch", n.sigma_disc.hard_touch},
                 {"delta_types",
                  std::vector<std::string>(n.sigma_disc.delta_types.begin(),
                                           n.sigma_disc.delta_types.end())}}},
           {"sigma_cont", n.sigma_cont},
           {"children", n.children},
           {"is_success_leaf", n.is_success_leaf},
           {"constituents", n.constituents},
           {"task_descs", n.task_descs}};
    Json gates = Json::array();
    for (const auto& g : n.local_gates) gates.push_back(gate_to_json(g));
    j["local_gates"] = gates;
    Json stats = Json::object();
    for (const auto& [child, clusters] : n.selection_stats) {
        Json per_cluster = Json::object();
        for (const auto& [cluster, st] : clusters)
            per_cluster[cluster] = Json{{"succ", st.succ}, {"fail", st.fail}};
        stats[std::to_string(child)] = per_cluster;
    }
    j["selection_stats"] = stats;
    j["precondition"] = n.precondition ? Json(print_expr(*n.precondition)) : Json(nullptr);
    j["env_signature"] = n.env_signature ? Json(*n.env_signature) : Json(nullptr);
    Json reps = Json::array();
    for (const auto& e : n.representative) reps.push_back(to_json(e));
    j["representative"] = reps;
    j["constituent_sigs"] = n.constituent_sigs;
    return j;
}

MacroNode node_from_json(const Json& j) {
    MacroNode n;
    n.node_id = j.at("node_id").get<int>();
    n.parent_id = j.at("parent_id").get<int>();
    n.description = j.at("description").get<std::string>();
    n.tags = j.at("tags").get<std::vector<std::string>>();
    n.risk_level = j.at("risk_level").get<int>();
    const auto& sd = j.at("sigma_disc");
    n.sigma_disc.family_counts = sd.at("family_counts").get<std::map<std::string, int>>();
    for (const auto& r : sd.at("resource_kinds")) n.sigma_disc.resource_kinds.insert(r.get<std::string>());
    n.sigma_disc.hard_touch = sd.at("hard_touch").get<bool>();
    for (const auto& d : sd.at("delta_types")) n.sigma_disc.delta_types.insert(d.get<std::string>());
    n.sigma_cont = j.at("sigma_cont").get<Vec>();
    n.children = j.at("children").get<std::vector<int>>();
    n.is_success_leaf = j.at("is_success_leaf").get<bool>();
    n.constituents = j.at("constituents").get<int>();
    n.task_descs = j.at("task_descs").get<std::vector<std::string>>();
    for (const auto& g : j.at("local_gates")) n.local_gates.push_back(gate_from_json(g));
    for (const auto& [child, clusters] : j.at("selection_stats").items()) {
        for (const auto& [cluster, st] : clusters.items()) {
            NodeStats stats;
            stats.succ = st.at("succ").get<int>();
            stats.fail = st.at("fail").get<int>();
            n.selection_stats[std::stoi(child)][cluster] = stats;
        }
    }
    if (!j.at("precondition").is_null())
        n.precondition = parse_expr(j.at("precondition").get<std::string>(), false);
    if (!j.at("env_signature").is_null()) n.env_signature = j.at("env_signature").get<Vec>();
    for (const auto& e : j.at("representative")) n.representative.push_back(event_from_json(e));
    n.constituent_sigs = j.at("constituent_sigs").get<std::vector<Vec>>();
    return n;
}

Json GBTree::to_json() const {
    Json nodes = Json::array();
    for (const auto& [id, n] : nodes_) nodes.push_back(node_to_json(n));
    return Json{{"version", version_},
                {"next_id", next_id_},
                {"family_roots", family_roots_},
                {"nodes", nodes},
                {"audit_log", audit_log_}};
}

GBTree GBTree::from_json(const Json& j) {
    GBTree t;
    t.nodes_.clear();
    t.version_ = j.at("version").get<int>();
    t.next_id_ = j.at("next_id").get<int>();
    t.family_roots_ = j.at("family_roots").get<std::map<std::string, int>>();
    for (const auto& n : j.at("nodes")) {
        MacroNode node = node_from_json(n);
        t.nodes_[node.node_id] = std::move(node);
    }
    t.audit_log_ = j.at("audit_log").get<std::vector<Json>>();
    t.validate();
    return t;
}

void GBTree::save(const std::string& file) const {
    validate();
    std::ofstream out(file);
    if (!out) throw TreeError("cannot write " + file);
    out << dump_canonical(to_json());
}

GBTree GBTree::load(const std::string& file, const TextEmbedder& embedder) {
    std::ifstream in(file);
    if (!in) throw TreeError("cannot open " + file);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw TreeError(std::string("artifact parse error: ") + e.what());
    }
    GBTree t = from_json(j);
    t.reembed(embedder);
    return t;
}

void GBTree::reembed(const TextEmbedder& embedder) {
    for (auto& [id, n] : nodes_) n.desc_embedding = embedder.embed(n.description);
}

}  // namespace gbt
