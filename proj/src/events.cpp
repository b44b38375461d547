#include "gbt/events.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace gbt {
namespace {

template <typename E>
struct NameTable {
    std::vector<std::pair<E, std::string>> entries;

    const std::string& name(E v) const {
        for (const auto& [e, n] : entries)
            if (e == v) return n;
        throw SchemaError("unknown enum value");
    }
    E value(const std::string& s) const {
        for (const auto& [e, n] : entries)
            if (n == s) return e;
        throw SchemaError("unknown enum name: " + s);
    }
};

const NameTable<PrimitiveType>& primitive_table() {
    static const NameTable<PrimitiveType> t{{
        {PrimitiveType::file_read, "file_read"},
        {PrimitiveType::file_write, "file_write"},
        {PrimitiveType::file_delete, "file_delete"},
        {PrimitiveType::proc_spawn, "proc_spawn"},
        {PrimitiveType::net_send, "net_send"},
        {PrimitiveType::browse_nav, "browse_nav"},
        {PrimitiveType::form_submit, "form_submit"},
        {PrimitiveType::code_exec, "code_exec"},
        {PrimitiveType::test_run, "test_run"},
    }};
    return t;
}

const NameTable<ToolFamily>& family_table() {
    static const NameTable<ToolFamily> t{{
        {ToolFamily::file_ops, "file_ops"},
        {ToolFamily::process, "process"},
        {ToolFamily::network, "network"},
        {ToolFamily::browser, "browser"},
        {ToolFamily::interpreter, "interpreter"},
    }};
    return t;
}

const NameTable<EventKind>& kind_table() {
    static const NameTable<EventKind> t{{
        {EventKind::action, "action"},
        {EventKind::observation, "observation"},
    }};
    return t;
}

const NameTable<DeltaType>& delta_table() {
    static const NameTable<DeltaType> t{{
        {DeltaType::fs_create, "fs_create"},
        {DeltaType::fs_modify, "fs_modify"},
        {DeltaType::fs_delete, "fs_delete"},
        {DeltaType::proc_start, "proc_start"},
        {DeltaType::proc_end, "proc_end"},
        {DeltaType::domain_change, "domain_change"},
        {DeltaType::form_submit, "form_submit"},
        {DeltaType::test_invocation, "test_invocation"},
    }};
    return t;
}

const NameTable<RiskCategory>& category_table() {
    static const NameTable<RiskCategory> t{{
        {RiskCategory::write_delete, "write_delete"},
        {RiskCategory::proc_spawn, "proc_spawn"},
        {RiskCategory::net_send, "net_send"},
        {RiskCategory::sensitive_read, "sensitive_read"},
        {RiskCategory::none, "none"},
    }};
    return t;
}

}  // namespace

const std::string& to_string(PrimitiveType t) { return primitive_table().name(t); }
const std::string& to_string(ToolFamily f) { return family_table().name(f); }
const std::string& to_string(EventKind k) { return kind_table().name(k); }
const std::string& to_string(DeltaType d) { return delta_table().name(d); }
const std::string& to_string(RiskCategory c) { return category_table().name(c); }
PrimitiveType primitive_from_string(const std::string& s) { return primitive_table().value(s); }
ToolFamily family_from_string(const std::string& s) { return family_table().value(s); }
EventKind kind_from_string(const std::string& s) { return kind_table().value(s); }
DeltaType delta_from_string(const std::string& s) { return delta_table().value(s); }
RiskCategory category_from_string(const std::string& s) { return category_table().value(s); }

ToolFamily family_of(PrimitiveType t) {
    switch (t) {
        case PrimitiveType::file_read:
        case PrimitiveType::file_write:
        case PrimitiveType::file_delete:
            return ToolFamily::file_ops;
        case PrimitiveType::proc_spawn:
            return ToolFamily::process;
        case PrimitiveType::net_send:
            return ToolFamily::network;
        case PrimitiveType::browse_nav:
        case PrimitiveType::form_submit:
            return ToolFamily::browser;
        case PrimitiveType::code_exec:
        case PrimitiveType::test_run:
            return ToolFamily::interpreter;
    }
    throw SchemaError("unknown primitive type");
}

bool Trajectory::has_verdicts() const {
    return std::any_of(events.begin(), events.end(),
                       [](const Event& e) { return !e.verdicts.empty(); });
}

void validate_trajectory(const Trajectory& t) {
    int prev = -1;
    for (const auto& e : t.events) {
        if (e.index <= prev) throw SchemaError("event indices not strictly increasing: " + t.id);
        prev = e.index;
        if (!e.verdicts.empty() && e.kind != EventKind::action)
            throw SchemaError("verdict on non-action event: " + t.id);
    }
    const bool any = t.has_verdicts();
    if ((t.label == TrajectoryLabel::unsafe) != any)
        throw SchemaError("label/verdict mismatch: " + t.id);
}

Json to_json(const ObservableDelta& d) {
    return Json{{"delta_type", to_string(d.type)},
                {"resource", d.resource},
                {"magnitude", d.magnitude}};
}

ObservableDelta delta_from_json(const Json& j) {
    ObservableDelta d;
    d.type = delta_from_string(j.at("delta_type").get<std::string>());
    d.resource = j.at("resource").get<std::string>();
    d.magnitude = j.at("magnitude").get<std::int64_t>();
    return d;
}

Json to_json(const Event& e) {
    Json deltas = Json::array();
    for (const auto& d : e.deltas) deltas.push_back(to_json(d));
    return Json{{"index", e.index},
                {"kind", to_string(e.kind)},
                {"primitive_type", to_string(e.primitive)},
                {"tool_family", to_string(e.family)},
                {"args", e.args},
                {"deltas", deltas},
                {"verdicts", e.verdicts}};
}

Event event_from_json(const Json& j) {
    Event e;
    e.index = j.at("index").get<int>();
    e.kind = kind_from_string(j.at("kind").get<std::string>());
    e.primitive = primitive_from_string(j.at("primitive_type").get<std::string>());
    e.family = family_from_string(j.at("tool_family").get<std::string>());
    e.args = j.at("args").get<std::map<std::string, std::string>>();
    for (const auto& d : j.at("deltas")) e.deltas.push_back(delta_from_json(d));
    e.verdicts = j.at("verdicts").get<std::vector<std::string>>();
    return e;
}

Json to_json(const Trajectory& t) {
    Json events = Json::array();
    for (const auto& e : t.events) events.push_back(to_json(e));
    return Json{{"id", t.id},
                {"task_desc", t.task_desc},
                {"label", t.label == TrajectoryLabel::unsafe ? "unsafe" : "safe"},
                {"success", t.success},
                {"events", events}};
}

Trajectory trajectory_from_json(const Json& j) {
    Trajectory t;
    t.id = j.at("id").get<std::string>();
    t.task_desc = j.at("task_desc").get<std::string>();
    const auto label = j.at("label").get<std::string>();
    if (label != "safe" && label != "unsafe") throw SchemaError("bad label: " + label);
    t.label = label == "unsafe" ? TrajectoryLabel::unsafe : TrajectoryLabel::safe;
    t.success = j.at("success").get<bool>();
    for (const auto& e : j.at("events")) t.events.push_back(event_from_json(e));
    return t;
}

std::string dump_canonical(const Json& j) { return j.dump(2) + "\n"; }

std::vector<Trajectory> load_trajectories(const std::string& path) {
    namespace fs = std::filesystem;
    std::vector<Trajectory> out;
    auto load_one = [&](const fs::path& file) {
        std::ifstream in(file);
        if (!in) throw SchemaError("cannot open " + file.string());
        Json j = Json::parse(in);
        if (j.is_array()) {
            for (const auto& x : j) out.push_back(trajectory_from_json(x));
        } else {
            out.push_back(trajectory_from_json(j));
        }
    };
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.path().extension() == ".json") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) load_one(f);
    } else {
        load_one(path);
    }
    for (const auto& t : out) validate_trajectory(t);
    return out;
}

void save_trajectory(const Trajectory& t, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw SchemaError("cannot write " + file);
    out << dump_canonical(to_json(t));
}

Json to_json(const StructuredContext& c) {
    Json j{{"primitive_type", to_string(c.primitive)},
           {"tool_family", to_string(c.family)},
           {"canonical_args", c.canonical_args},
           {"workspace_roots", c.workspace_roots},
           {"cwd", c.cwd},
           {"trajectory_id", c.trajectory_id},
           {"event_index", c.event_index}};
    if (c.net_dest) {
        j["net_dest"] = Json{{"domain", c.net_dest->domain},
                             {"port", c.net_dest->port},
                             {"scheme", c.net_dest->scheme}};
    }
    if (c.proc_meta) {
        j["proc_meta"] = Json{{"executable", c.proc_meta->executable},
                              {"argv_digest", c.proc_meta->argv_digest}};
    }
    if (c.payload_meta) {
        j["payload_meta"] = Json{{"length", c.payload_meta->length},
                                 {"content_hash", c.payload_meta->content_hash}};
    }
    Json hist = Json::array();
    for (const auto& h : c.recent_hard_history) {
        hist.push_back(Json{{"type", to_string(h.type)},
                            {"resource", h.resource},
                            {"coarse_op", h.coarse_op}});
    }
    j["recent_hard_history"] = hist;
    return j;
}

StructuredContext ctx_from_json(const Json& j) {
    StructuredContext c;
    c.primitive = primitive_from_string(j.at("primitive_type").get<std::string>());
    c.family = family_from_string(j.at("tool_family").get<std::string>());
    c.canonical_args = j.at("canonical_args").get<std::map<std::string, std::string>>();
    c.workspace_roots = j.at("workspace_roots").get<std::vector<std::string>>();
    c.cwd = j.at("cwd").get<std::string>();
    if (j.contains("net_dest")) {
        NetDest n;
        n.domain = j["net_dest"].at("domain").get<std::string>();
        n.port = j["net_dest"].at("port").get<int>();
        n.scheme = j["net_dest"].at("scheme").get<std::string>();
        c.net_dest = n;
    }
    if (j.contains("proc_meta")) {
        ProcMeta p;
        p.executable = j["proc_meta"].at("executable").get<std::string>();
        p.argv_digest = j["proc_meta"].at("argv_digest").get<std::string>();
        c.proc_meta = p;
    }
    if (j.contains("payload_meta")) {
        PayloadMeta p;
        p.length = j["payload_meta"].at("length").get<std::int64_t>();
        p.content_hash = j["payload_meta"].at("content_hash").get<std::string>();
        c.payload_meta = p;
    }
    for (const auto& h : j.at("recent_hard_history")) {
        HardRecord r;
        r.type = primitive_from_string(h.at("type").get<std::string>());
        r.resource = h.at("resource").get<std::string>();
        r.coarse_op = h.at("coarse_op").get<std::string>();
        c.recent_hard_history.push_back(r);
    }
    c.trajectory_id = j.value("trajectory_id", "");
    c.event_index = j.value("event_index", -1);
    return c;
}

}  // namespace gbt
