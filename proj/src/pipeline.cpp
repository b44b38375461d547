#include "gbt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "gbt/recovery.hpp"
#include "gbt/util.hpp"

namespace gbt {

namespace fs = std::filesystem;

std::string Artifact::safety_hash() const {
    return to_hex(fnv1a64(library.safety_hash() + "+" + tree.gate_safety_hash()));
}

namespace {

void write_file(const fs::path& p, const Json& j) {
    std::ofstream out(p);
    if (!out) throw SchemaError("cannot write " + p.string());
    out << dump_canonical(j);
}

Json read_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw SchemaError("cannot open " + p.string());
    return Json::parse(in);
}

}  // namespace

void Artifact::save(const std::string& dir) const {
    fs::create_directories(dir);
    tree.save((fs::path(dir) / "tree.json").string());
    write_file(fs::path(dir) / "gates.json", library.to_json());
    Json unsafe = Json::array();
    for (const auto& e : unsafe_corpus) unsafe.push_back(to_json(e));
    write_file(fs::path(dir) / "corpus_unsafe.json", unsafe);
    Json benign = Json::array();
    for (const auto& e : benign_corpus) benign.push_back(to_json(e));
    write_file(fs::path(dir) / "corpus_benign.json", benign);
    write_file(fs::path(dir) / "build_report.json", build_report);
    write_file(fs::path(dir) / "config.json", config.to_json());
}

Artifact Artifact::load(const std::string& dir, const TextEmbedder& embedder) {
    Artifact a;
    a.tree = GBTree::load((fs::path(dir) / "tree.json").string(), embedder);
    a.library = GateLibrary::from_json(read_file(fs::path(dir) / "gates.json"));
    for (const auto& e : read_file(fs::path(dir) / "corpus_unsafe.json"))
        a.unsafe_corpus.push_back(corpus_entry_from_json(e));
    for (const auto& e : read_file(fs::path(dir) / "corpus_benign.json"))
        a.benign_corpus.push_back(corpus_entry_from_json(e));
    a.build_report = read_file(fs::path(dir) / "build_report.json");
    a.config = Config::from_json(read_file(fs::path(dir) / "config.json"));
    return a;
}

std::unique_ptr<PayloadClassifier> make_classifier(const Config& cfg) {
    return std::make_unique<KeywordClassifier>(cfg.payload_keywords);
}

std::vector<FamilyPrototypes> artifact_prototypes(const Artifact& artifact,
                                                  const TextEmbedder& embedder) {
    return prototypes_from_json(artifact.config.prototypes, embedder);
}

bool rejected_by_artifact(const Artifact& artifact, const StructuredContext& ctx,
                          const PayloadClassifier* classifier) {
    EvalEnv env{&artifact.library.allowlists, classifier};
    for (const Gate* g : artifact.library.global_gates())
        if (!eval_gate(*g, ctx, env).ok) return true;
    for (const Gate* g : artifact.tree.all_node_gates())
        if (!eval_gate(*g, ctx, env).ok) return true;
    return false;
}

Artifact distill(const std::vector<Trajectory>& trajectories, const ScenarioSet& environment,
                 const Config& cfg, const TextEmbedder& embedder,
                 const PayloadClassifier* classifier) {
    Artifact artifact;
    artifact.config = cfg;
    artifact.library.allowlists = cfg.allowlists;
    int base_seq = 0;
    for (const auto& text : cfg.baseline_gates) {
        Gate g;
        g.id = "g_base" + std::to_string(base_seq++);
        g.expr = parse_expr(text);
        g.message_template = "blocked {primitive} on {resource} by baseline policy ({gate})";
        artifact.library.add_gate(std::move(g));
    }

    const auto prototypes = prototypes_from_json(cfg.prototypes, embedder);
    const ExtractorOptions ex_opt = cfg.extractor_options();
    const TemplateSummarizer summarizer;
    DistillStats stats;
    stats.trajectories = static_cast<int>(trajectories.size());

    // benign corpus: hard-primitive contexts from safe trajectories
    for (const auto& t : trajectories) {
        if (t.label != TrajectoryLabel::safe) continue;
        const auto spans = segment(t, ex_opt);
        for (const auto& [start, end] : spans) {
            for (const auto& e : t.events) {
                if (!e.is_action() || e.index < start || e.index > end) continue;
                const RiskClass rc = classify_hard(e.primitive, e.args, cfg.sensitive_patterns);
                if (!rc.is_hard) continue;
                CtxOptions opt = cfg.ctx_options();
                opt.scope = std::make_pair(start, end + 1);
                CorpusEntry entry;
                entry.ctx = build_ctx(t, e.index, opt);
                entry.window_start = start;
                entry.window_end = end;
                artifact.benign_corpus.push_back(std::move(entry));
            }
        }
    }
    std::vector<StructuredContext> benign_ctxs;
    for (const auto& e : artifact.benign_corpus) benign_ctxs.push_back(e.ctx);

    EvalEnv eval_env{&artifact.library.allowlists, classifier};
    int mined_seq = 0;

    for (const auto& t : trajectories) {
        const auto spans = segment(t, ex_opt);
        const bool touches_hard = [&] {
            for (const auto& e : t.events) {
                if (!e.is_action()) continue;
                if (classify_hard(e.primitive, e.args, cfg.sensitive_patterns).is_hard)
                    return true;
            }
            return false;
        }();
        if (t.label == TrajectoryLabel::unsafe || touches_hard) {
            const StabilityReport stability =
                stability_test(t, cfg.stability_perturbations, cfg.delta_stab, ex_opt);
            if (!stability.stable) {
                stats.excluded_unstable += 1;
                continue;  // neither tree paths nor gate derivation
            }
        }
        const RoutingDecision routed =
            route(t.task_desc, prototypes, cfg.t_fam, cfg.delta_fam, embedder);
        if (routed.abstained) {
            stats.abstained += 1;
            continue;
        }
        const std::string family = *routed.family;

        std::vector<MacroCandidate> macros;
        for (const auto& [start, end] : spans) {
            MacroCandidate mc;
            mc.span = describe_span(t, start, end, summarizer, ex_opt);
            for (const auto& e : t.events) {
                if (e.is_action() && e.index >= start && e.index <= end) {
                    Event stripped = e;
                    stripped.deltas.clear();
                    stripped.verdicts.clear();
                    mc.representative.push_back(stripped);
                }
            }
            macros.push_back(std::move(mc));
        }

        if (t.label == TrajectoryLabel::safe && t.success) {
            const Replayer replayer(t, environment.initial_state());
            const Vec env_sig = env_signature_vector(env_summary(replayer.final_state()));
            const InsertResult ins = artifact.tree.insert_path(
                family, macros, true, env_sig, t.task_desc, cfg.merge_thresholds(), embedder);
            stats.inserted_paths += 1;
            // feasibility preconditions for fresh nodes: files the macro
            // reads that already existed when the episode started
            for (const auto& step : ins.steps) {
                if (step.action != "new") continue;
                const MacroNode& n = artifact.tree.node(step.node_id);
                std::vector<GateExpr> needs;
                for (const auto& e : n.representative) {
                    if (e.primitive != PrimitiveType::file_read) continue;
                    const auto it = e.args.find("path");
                    if (it == e.args.end()) continue;
                    const std::string path = canonicalize_path(it->second, cfg.workspace_roots);
                    if (std::find(environment.init_files.begin(), environment.init_files.end(),
                                  path) == environment.init_files.end())
                        continue;
                    needs.push_back(make_path_matches("files", path));
                    if (needs.size() == 2) break;
                }
                if (!needs.empty())
                    artifact.tree.set_precondition(
                        step.node_id, needs.size() == 1 ? needs.front() : make_and(needs));
            }
            // seed selection statistics from the distilled outcome
            int prev = artifact.tree.family_root_of(ins.path_nodes.front());
            for (int node_id : ins.path_nodes) {
                const MacroNode& child = artifact.tree.node(node_id);
                artifact.tree.record_outcome(
                    prev, node_id, cluster_key(family, child.risk_level, child.sigma_disc), true);
                prev = node_id;
            }
        } else if (t.label == TrajectoryLabel::unsafe) {
            try {
                const Replayer replayer(t, environment.initial_state());
                const UnsafeWindow window = shrink_window(replayer, cfg.ctx_options());
                const auto [u_first, u_last] = map_window_to_macros(window, spans);
                stats.unsafe_mined += 1;

                // locate existing tree nodes whose behavior matches the
                // unsafe macros (signature + description agreement, same
                // criteria as merging but position-free)
                std::vector<int> mapped;
                if (artifact.tree.family_roots().count(family)) {
                    const int family_root = artifact.tree.family_roots().at(family);
                    for (int k = u_first; k <= u_last; ++k) {
                        const MacroSpan& span = macros[static_cast<std::size_t>(k)].span;
                        const Vec emb = embedder.embed(span.description);
                        int best = -1;
                        double best_sim = 0.0;
                        for (int id : artifact.tree.subtree_of(family_root)) {
                            if (id == family_root) continue;
                            const MacroNode& n = artifact.tree.node(id);
                            if (!(n.sigma_disc == span.sigma_disc)) continue;
                            if (cosine(n.sigma_cont, span.sigma_cont) < cfg.theta_sig) continue;
                            const double ds = cosine(n.desc_embedding, emb);
                            if (ds < cfg.theta_merge) continue;
                            if (best == -1 || ds > best_sim) {
                                best = id;
                                best_sim = ds;
                            }
                        }
                        if (best != -1 &&
                            std::find(mapped.begin(), mapped.end(), best) == mapped.end())
                            mapped.push_back(best);
                    }
                }

                const bool node_scope = !mapped.empty();
                const double eps = node_scope ? cfg.eps_benign_node : cfg.eps_benign_global;
                const std::string prefix =
                    (node_scope ? "n" + std::to_string(mapped.front()) : "g") + "_mined" +
                    std::to_string(mined_seq++);
                const SynthesisResult synth = synthesize_node_gates(
                    window.contexts, benign_ctxs, eps, prefix, eval_env);
                for (const auto& f : synth.failures)
                    stats.synthesis_failures.push_back(t.id + ": " + f);
                for (const auto& g : synth.gates) {
                    const std::string canonical = print_expr(g.expr);
                    if (node_scope) {
                        for (int node_id : mapped) {
                            const auto& existing = artifact.tree.node(node_id).local_gates;
                            if (std::any_of(existing.begin(), existing.end(),
                                            [&](const Gate& h) {
                                                return print_expr(h.expr) == canonical;
                                            }))
                                continue;
                            Gate attached = g;
                            attached.id = g.id + "_n" + std::to_string(node_id);
                            artifact.tree.add_node_gate(node_id, attached);
                            stats.node_gates += 1;
                        }
                    } else {
                        const auto globals = artifact.library.global_gates();
                        if (std::any_of(globals.begin(), globals.end(), [&](const Gate* h) {
                                return print_expr(h->expr) == canonical;
                            }))
                            continue;
                        artifact.library.add_gate(g);
                        stats.global_gates += 1;
                    }
                }
                for (const auto& ctx : window.contexts) {
                    CorpusEntry entry;
                    entry.ctx = ctx;
                    entry.window_start = window.start_index;
                    entry.window_end = window.end_index;
                    entry.mapped_nodes = mapped;
                    entry.gated = !synth.gates.empty() &&
                                  rejected_by_artifact(artifact, ctx, classifier);
                    artifact.unsafe_corpus.push_back(std::move(entry));
                }
            } catch (const MiningError& e) {
                stats.quarantined.push_back(t.id + ": " + e.what());
            }
        }
    }

    artifact.tree.validate();
    artifact.build_report = Json{{"trajectories", stats.trajectories},
                                 {"inserted_paths", stats.inserted_paths},
                                 {"unsafe_mined", stats.unsafe_mined},
                                 {"node_gates", stats.node_gates},
                                 {"global_gates", stats.global_gates},
                                 {"excluded_unstable", stats.excluded_unstable},
                                 {"abstained", stats.abstained},
                                 {"synthesis_failures", stats.synthesis_failures},
                                 {"quarantined", stats.quarantined},
                                 {"config_digest", cfg.digest()},
                                 {"safety_hash", artifact.safety_hash()}};
    return artifact;
}

EvolveOutcome evolve_artifact(Artifact& artifact, const std::vector<EpisodeRecord>& episodes,
                              const ScenarioSet& scenarios, const TextEmbedder& embedder,
                              const PayloadClassifier* classifier) {
    const auto prototypes = artifact_prototypes(artifact, embedder);
    EvolveOutcome out =
        evolve(artifact.tree, episodes, scenarios, prototypes, artifact.library,
               artifact.unsafe_corpus, artifact.config, embedder, classifier);
    // post-evolution audit: the whole unsafe corpus must stay rejected
    for (const auto& entry : artifact.unsafe_corpus) {
        if (!entry.gated) continue;
        if (!rejected_by_artifact(artifact, entry.ctx, classifier))
            throw TreeError("post-evolution unsafe re-admission: " + entry.ctx.trajectory_id);
    }
    return out;
}

RunReport run_episodes(const Artifact& artifact, const ScenarioSet& scenarios, RunMode mode,
                       std::uint64_t seed, int workers, const TextEmbedder& embedder,
                       const PayloadClassifier* classifier) {
    const auto prototypes = artifact_prototypes(artifact, embedder);
    const EpisodeRunner runner(&artifact.tree, &artifact.library, &prototypes, &artifact.config,
                               &embedder, classifier);
    RunReport report;
    report.mode = to_string(mode);
    report.seed = seed;
    report.episodes.resize(scenarios.scenarios.size());

    const int n_workers = std::max(1, workers);
    if (n_workers == 1) {
        for (std::size_t i = 0; i < scenarios.scenarios.size(); ++i)
            report.episodes[i] = runner.run(scenarios.scenarios[i], scenarios, mode);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < n_workers; ++w) {
            pool.emplace_back([&] {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= scenarios.scenarios.size()) return;
                    report.episodes[i] = runner.run(scenarios.scenarios[i], scenarios, mode);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    return report;
}

AuditReport audit_artifacts(const std::vector<const Artifact*>& artifacts,
                            const std::vector<StructuredContext>& probe,
                            const PayloadClassifier* classifier) {
    AuditReport report;
    auto fail = [&](const std::string& what) {
        report.ok = false;
        report.failures.push_back(what);
    };
    Json details = Json::array();

    for (std::size_t a = 0; a < artifacts.size(); ++a) {
        const Artifact& art = *artifacts[a];
        Json d{{"artifact", a}};
        try {
            art.tree.validate();
            d["structure"] = "ok";
        } catch (const std::exception& e) {
            fail("structure: " + std::string(e.what()));
            d["structure"] = e.what();
        }
        // gate round-trips, global and node-local
        int checked = 0;
        try {
            for (const Gate* g : art.library.global_gates()) {
                const std::string txt = print_expr(g->expr);
                if (print_expr(parse_expr(txt)) != txt) throw SchemaError("gate " + g->id);
                ++checked;
            }
            for (const Gate* g : art.tree.all_node_gates()) {
                const std::string txt = print_expr(g->expr);
                if (print_expr(parse_expr(txt)) != txt) throw SchemaError("gate " + g->id);
                ++checked;
            }
            d["gate_round_trips"] = checked;
        } catch (const std::exception& e) {
            fail("gate round-trip: " + std::string(e.what()));
        }
        // no merge ever targeted a node that carried gates at merge time
        std::map<int, int> gate_attach_version;
        for (const auto& rec : art.tree.audit_log()) {
            if (rec.value("op", "") == "attach_gate") {
                const int node = rec.at("node").get<int>();
                if (!gate_attach_version.count(node))
                    gate_attach_version[node] = rec.at("version").get<int>();
            }
        }
        for (const auto& rec : art.tree.audit_log()) {
            if (rec.value("op", "") != "insert_path") continue;
            for (const auto& step : rec.at("steps")) {
                if (step.at("action").get<std::string>() != "merge") continue;
                const int node = step.at("node").get<int>();
                const auto it = gate_attach_version.find(node);
                if (it != gate_attach_version.end() &&
                    it->second < rec.at("version").get<int>())
                    fail("merge into gated node " + std::to_string(node));
            }
        }
        // unsafe corpus stays rejected
        int readmitted = 0;
        for (const auto& entry : art.unsafe_corpus) {
            if (!entry.gated) continue;
            if (!rejected_by_artifact(art, entry.ctx, classifier)) {
                ++readmitted;
                fail("unsafe re-admission: " + entry.ctx.trajectory_id + ":" +
                     std::to_string(entry.ctx.event_index));
            }
        }
        d["unsafe_readmitted"] = readmitted;
        details.push_back(d);
    }

    // rejection-set expansion across the version chain
    if (artifacts.size() >= 2 && !probe.empty()) {
        for (std::size_t a = 0; a + 1 < artifacts.size(); ++a) {
            for (std::size_t i = 0; i < probe.size(); ++i) {
                const bool before = rejected_by_artifact(*artifacts[a], probe[i], classifier);
                const bool after = rejected_by_artifact(*artifacts[a + 1], probe[i], classifier);
                if (before && !after)
                    fail("rejection set shrank at probe " + std::to_string(i) +
                         " between artifacts " + std::to_string(a) + " and " +
                         std::to_string(a + 1));
            }
        }
    }
    report.details = details;
    return report;
}

}  // namespace gbt
