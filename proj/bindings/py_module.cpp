#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gbt/pipeline.hpp"
#include "gbt/recovery.hpp"
#include "gbt/scoring.hpp"

namespace py = pybind11;
using namespace gbt;

namespace {

Json json_from_pystr(const std::string& s) { return Json::parse(s); }

StructuredContext ctx_from_str(const std::string& s) { return ctx_from_json(json_from_pystr(s)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "gated behavior tree core operations";

    m.def("canonicalize_path",
          [](const std::string& raw, const std::vector<std::string>& roots) {
              return canonicalize_path(raw, roots);
          },
          py::arg("raw"), py::arg("roots") = std::vector<std::string>{});

    m.def("canonicalize_resource",
          [](const std::string& raw, const std::string& ns,
             const std::vector<std::string>& roots) {
              ResourceNamespace n = ns == "url"       ? ResourceNamespace::url
                                    : ns == "process" ? ResourceNamespace::process
                                                      : ResourceNamespace::path;
              const CanonicalResource r = canonicalize_resource(raw, n, roots);
              return py::make_tuple(r.canonical, r.outside_root);
          },
          py::arg("raw"), py::arg("namespace"), py::arg("roots"));

    m.def("classify_hard",
          [](const std::string& primitive, const std::map<std::string, std::string>& args,
             const std::vector<std::string>& patterns) {
              const RiskClass rc = classify_hard(primitive_from_string(primitive), args, patterns);
              return py::make_tuple(rc.is_hard, to_string(rc.category), rc.risk_level);
          },
          py::arg("primitive"), py::arg("args"), py::arg("sensitive_patterns"));

    m.def("parse_gate", [](const std::string& text) { return print_expr(parse_expr(text)); },
          "parse DSL text and return its canonical form");

    m.def("eval_gate",
          [](const std::string& expr_text, const std::string& ctx_json,
             const std::map<std::string, std::vector<std::string>>& allowlists) {
              Gate g;
              g.id = "py";
              g.expr = parse_expr(expr_text);
              g.message_template = "blocked {primitive} on {resource}";
              const StructuredContext ctx = ctx_from_str(ctx_json);
              const KeywordClassifier classifier(default_config().payload_keywords);
              EvalEnv env{&allowlists, &classifier};
              const GateVerdict v = eval_gate(g, ctx, env);
              return py::make_tuple(v.ok, v.msg);
          },
          py::arg("expr"), py::arg("ctx_json"),
          py::arg("allowlists") = std::map<std::string, std::vector<std::string>>{});

    m.def("embed_cosine",
          [](const std::string& a, const std::string& b) {
              const TrigramEmbedder emb(256);
              return cosine(emb.embed(a), emb.embed(b));
          });

    m.def("route",
          [](const std::string& task, const std::string& prototypes_json, double t_fam,
             double delta_fam) {
              const TrigramEmbedder emb(256);
              const auto protos = prototypes_from_json(json_from_pystr(prototypes_json), emb);
              const RoutingDecision d = route(task, protos, t_fam, delta_fam, emb);
              return py::make_tuple(d.family ? py::object(py::str(*d.family)) : py::none(),
                                    d.p_max, d.abstained);
          },
          py::arg("task"), py::arg("prototypes_json"), py::arg("t_fam") = 0.05,
          py::arg("delta_fam") = 0.55);

    m.def("score", &score_value, py::arg("sim"), py::arg("rate"), py::arg("alpha") = 1.0,
          py::arg("beta") = 0.5);

    m.def("edge_cost", &edge_cost, py::arg("lambda_"), py::arg("risk_level"));

    m.def("generate_scenarios",
          [](std::uint64_t seed, const std::string& profile_json) {
              const Profile p = profile_from_json(json_from_pystr(profile_json));
              return to_json(generate_scenarios(seed, p)).dump();
          },
          py::arg("seed"), py::arg("profile_json"));

    m.def("distill_to_dir",
          [](const std::string& scenarios_json, const std::string& out_dir,
             const std::string& config_json) {
              const Config cfg = config_json.empty()
                                     ? default_config()
                                     : Config::from_json(json_from_pystr(config_json));
              const TrigramEmbedder emb(static_cast<std::size_t>(cfg.embed_dim));
              const auto classifier = make_classifier(cfg);
              const ScenarioSet set = scenario_set_from_json(json_from_pystr(scenarios_json));
              const Artifact a =
                  distill(trajectories_from(set), set, cfg, emb, classifier.get());
              a.save(out_dir);
              return a.build_report.dump();
          },
          py::arg("scenarios_json"), py::arg("out_dir"), py::arg("config_json") = std::string());

    m.def("run_report",
          [](const std::string& artifact_dir, const std::string& scenarios_json,
             const std::string& mode, std::uint64_t seed) {
              const TrigramEmbedder probe(256);
              Artifact a = Artifact::load(artifact_dir, probe);
              const TrigramEmbedder emb(static_cast<std::size_t>(a.config.embed_dim));
              a.tree.reembed(emb);
              const auto classifier = make_classifier(a.config);
              const ScenarioSet set = scenario_set_from_json(json_from_pystr(scenarios_json));
              const RunReport r = run_episodes(a, set, mode_from_string(mode), seed, 1, emb,
                                               classifier.get());
              return r.to_json().dump();
          },
          py::arg("artifact_dir"), py::arg("scenarios_json"), py::arg("mode") = "gbt-se",
          py::arg("seed") = 1);
}
