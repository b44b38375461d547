#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gbt/pipeline.hpp"
#include "gbt/util.hpp"

namespace {

using namespace gbt;

Json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return Json::parse(in);
}

void write_json(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << dump_canonical(j);
}

Config load_config_or_default(const std::string& path) {
    return path.empty() ? default_config() : Config::load(path);
}

std::vector<EpisodeRecord> episodes_from_report(const Json& report) {
    std::vector<EpisodeRecord> out;
    for (const auto& e : report.at("episodes")) out.push_back(episode_from_json(e));
    return out;
}

struct LoadedArtifact {
    Artifact artifact;
    std::unique_ptr<TrigramEmbedder> embedder;
};

LoadedArtifact load_artifact(const std::string& dir) {
    const Config cfg =
        Config::from_json(read_json((std::filesystem::path(dir) / "config.json").string()));
    auto embedder = std::make_unique<TrigramEmbedder>(static_cast<std::size_t>(cfg.embed_dim));
    LoadedArtifact out{Artifact::load(dir, *embedder), std::move(embedder)};
    return out;
}

int cmd_gen_scenarios(const std::string& profile_path, std::uint64_t seed, int n,
                      const std::string& out_path, const std::string& logs_out) {
    Profile profile = load_profile(profile_path);
    if (n > 0) profile.n = n;
    const ScenarioSet set = generate_scenarios(seed, profile);
    save_scenarios(set, out_path);
    if (!logs_out.empty()) {
        std::filesystem::create_directories(logs_out);
        int idx = 0;
        for (const auto& t : trajectories_from(set)) {
            char name[32];
            std::snprintf(name, sizeof(name), "t%05d.json", idx++);
            save_trajectory(t, (std::filesystem::path(logs_out) / name).string());
        }
    }
    std::cout << "scenarios: " << set.scenarios.size() << " -> " << out_path << "\n";
    return 0;
}

int cmd_distill(const std::string& scenarios_path, const std::string& logs_path,
                const std::string& config_path, const std::string& out_dir) {
    const Config cfg = load_config_or_default(config_path);
    const auto embedder = TrigramEmbedder(static_cast<std::size_t>(cfg.embed_dim));
    const auto classifier = make_classifier(cfg);

    ScenarioSet environment;
    std::vector<Trajectory> trajectories;
    if (!scenarios_path.empty()) {
        environment = load_scenarios(scenarios_path);
        trajectories = trajectories_from(environment);
    } else {
        throw std::runtime_error("distill needs --scenarios (environment + logs source)");
    }
    if (!logs_path.empty()) trajectories = load_trajectories(logs_path);

    if (trajectories.empty())
        std::cerr << "warning: no trajectories; emitting an empty artifact\n";
    Artifact artifact = distill(trajectories, environment, cfg, embedder, classifier.get());
    artifact.save(out_dir);
    std::cout << dump_canonical(artifact.build_report);
    return 0;
}

int cmd_evolve(const std::string& artifact_dir, const std::string& failures_path,
               const std::string& scenarios_path, const std::string& out_dir) {
    LoadedArtifact loaded = load_artifact(artifact_dir);
    Artifact& artifact = loaded.artifact;
    const TextEmbedder& emb = *loaded.embedder;
    const auto classifier = make_classifier(artifact.config);
    const ScenarioSet scenarios = load_scenarios(scenarios_path);
    const auto episodes = episodes_from_report(read_json(failures_path));

    const std::string hash_before = artifact.safety_hash();
    const EvolveOutcome outcome =
        evolve_artifact(artifact, episodes, scenarios, emb, classifier.get());
    // an empty evolution round still bumps the version with an empty audit
    if (outcome.proposals == 0)
        artifact.tree.bump_version(Json{{"op", "evolve"}, {"accepted", 0}, {"proposals", 0}});
    artifact.build_report["evolve_log"] = outcome.log;
    artifact.build_report["safety_hash"] = artifact.safety_hash();
    artifact.save(out_dir);
    std::cout << dump_canonical(Json{{"proposals", outcome.proposals},
                                     {"accepted", outcome.accepted},
                                     {"safety_hash_before", hash_before},
                                     {"safety_hash_after", artifact.safety_hash()},
                                     {"version", artifact.tree.version()},
                                     {"log", outcome.log}});
    return 0;
}

int cmd_run(const std::string& artifact_dir, const std::string& scenarios_path,
            const std::string& mode_name, std::uint64_t seed, int workers,
            const std::string& out_path) {
    const LoadedArtifact loaded = load_artifact(artifact_dir);
    const Artifact& artifact = loaded.artifact;
    const TextEmbedder& embedder = *loaded.embedder;
    const auto classifier = make_classifier(artifact.config);
    const ScenarioSet scenarios = load_scenarios(scenarios_path);
    const RunMode mode = mode_from_string(mode_name);
    const RunReport report =
        run_episodes(artifact, scenarios, mode, seed, workers, embedder, classifier.get());
    const Json j = report.to_json();
    if (!out_path.empty()) write_json(out_path, j);
    std::cout << dump_canonical(j.at("aggregates"));
    return 0;
}

int cmd_audit(const std::vector<std::string>& artifact_dirs, const std::string& probe_path) {
    std::vector<LoadedArtifact> loaded;
    for (const auto& dir : artifact_dirs) loaded.push_back(load_artifact(dir));
    std::vector<const Artifact*> ptrs;
    for (auto& l : loaded) ptrs.push_back(&l.artifact);

    std::vector<StructuredContext> probe;
    if (!probe_path.empty()) {
        for (const auto& e : read_json(probe_path)) probe.push_back(ctx_from_json(e.at("ctx")));
    } else {
        for (const auto& l : loaded)
            for (const auto& e : l.artifact.unsafe_corpus) probe.push_back(e.ctx);
    }
    const auto classifier = make_classifier(loaded.front().artifact.config);
    const AuditReport report = audit_artifacts(ptrs, probe, classifier.get());
    std::cout << dump_canonical(Json{{"ok", report.ok},
                                     {"failures", report.failures},
                                     {"details", report.details}});
    return report.ok ? 0 : 1;
}

int cmd_gate_test(const std::string& gates_path, const std::string& unsafe_path,
                  const std::string& benign_path, double eps) {
    const GateLibrary lib = GateLibrary::from_json(read_json(gates_path));
    auto load_ctxs = [](const std::string& path) {
        std::vector<StructuredContext> out;
        if (path.empty()) return out;
        for (const auto& e : read_json(path)) out.push_back(ctx_from_json(e.at("ctx")));
        return out;
    };
    const auto unsafe = load_ctxs(unsafe_path);
    const auto benign = load_ctxs(benign_path);
    const KeywordClassifier classifier(default_config().payload_keywords);
    EvalEnv env{&lib.allowlists, &classifier};

    Json rows = Json::array();
    bool ok = true;
    for (const auto& g : lib.gates) {
        int rejected_unsafe = 0, rejected_benign = 0;
        for (const auto& c : unsafe)
            if (!eval_gate(g, c, env).ok) ++rejected_unsafe;
        for (const auto& c : benign)
            if (!eval_gate(g, c, env).ok) ++rejected_benign;
        const double fp = benign.empty()
                              ? 0.0
                              : static_cast<double>(rejected_benign) /
                                    static_cast<double>(benign.size());
        if (fp > eps) ok = false;
        rows.push_back(Json{{"gate", g.id},
                            {"rejected_unsafe", rejected_unsafe},
                            {"unsafe_total", unsafe.size()},
                            {"benign_fp", fp},
                            {"within_eps", fp <= eps}});
    }
    std::cout << dump_canonical(Json{{"ok", ok}, {"eps", eps}, {"gates", rows}});
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gbt: distill, evolve, run and audit gated behavior trees"};
    app.require_subcommand(1);

    std::string config_path, scenarios_path, logs_path, out_path, artifact_dir, mode = "gbt-se";
    std::string profile_path, failures_path, probe_path, gates_path, unsafe_path, benign_path;
    std::string logs_out;
    std::vector<std::string> artifact_dirs;
    std::uint64_t seed = 1;
    int workers = 1, n = 0;
    double eps = 0.01;

    auto* gen = app.add_subcommand("gen-scenarios", "generate a seeded scenario corpus");
    gen->add_option("--profile", profile_path)->required();
    gen->add_option("--seed", seed);
    gen->add_option("--n", n);
    gen->add_option("--out", out_path)->required();
    gen->add_option("--logs-out", logs_out);

    auto* distill = app.add_subcommand("distill", "logs -> tree artifact + gate library");
    distill->add_option("--scenarios", scenarios_path)->required();
    distill->add_option("--logs", logs_path);
    distill->add_option("--config", config_path);
    distill->add_option("--out", artifact_dir)->required();

    auto* evolve = app.add_subcommand("evolve", "covered failures -> repaired artifact");
    evolve->add_option("--artifact", artifact_dir)->required();
    evolve->add_option("--failures", failures_path)->required();
    evolve->add_option("--scenarios", scenarios_path)->required();
    evolve->add_option("--out", out_path)->required();

    auto* run = app.add_subcommand("run", "execute episodes against the simulator");
    run->add_option("--artifact", artifact_dir)->required();
    run->add_option("--scenarios", scenarios_path)->required();
    run->add_option("--mode", mode)
        ->check(CLI::IsMember({"native", "guardrail-only", "gbt-basic", "gbt-se"}));
    run->add_option("--seed", seed);
    run->add_option("--workers", workers);
    run->add_option("--out", out_path);

    auto* audit = app.add_subcommand("audit", "invariant audit over artifact versions");
    audit->add_option("--artifact", artifact_dirs)->required();
    audit->add_option("--probe", probe_path);

    auto* gate_test = app.add_subcommand("gate-test", "evaluate a gate file against corpora");
    gate_test->add_option("--gates", gates_path)->required();
    gate_test->add_option("--unsafe", unsafe_path);
    gate_test->add_option("--benign", benign_path);
    gate_test->add_option("--eps", eps);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_scenarios(profile_path, seed, n, out_path, logs_out);
        if (distill->parsed()) return cmd_distill(scenarios_path, logs_path, config_path, artifact_dir);
        if (evolve->parsed()) return cmd_evolve(artifact_dir, failures_path, scenarios_path, out_path);
        if (run->parsed()) return cmd_run(artifact_dir, scenarios_path, mode, seed, workers, out_path);
        if (audit->parsed()) return cmd_audit(artifact_dirs, probe_path);
        if (gate_test->parsed()) return cmd_gate_test(gates_path, unsafe_path, benign_path, eps);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
