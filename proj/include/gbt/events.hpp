#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace gbt {

using Json = nlohmann::json;

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class PrimitiveType {
    file_read,
    file_write,
    file_delete,
    proc_spawn,
    net_send,
    browse_nav,
    form_submit,
    code_exec,
    test_run,
};

enum class ToolFamily {
    file_ops,
    process,
    network,
    browser,
    interpreter,
};
inline constexpr std::size_t kToolFamilyCount = 5;

enum class EventKind { action, observation };

enum class DeltaType {
    fs_create,
    fs_modify,
    fs_delete,
    proc_start,
    proc_end,
    domain_change,
    form_submit,
    test_invocation,
};
inline constexpr std::size_t kDeltaTypeCount = 8;

enum class RiskCategory { write_delete, proc_spawn, net_send, sensitive_read, none };

const std::string& to_string(PrimitiveType t);
const std::string& to_string(ToolFamily f);
const std::string& to_string(EventKind k);
const std::string& to_string(DeltaType d);
const std::string& to_string(RiskCategory c);
PrimitiveType primitive_from_string(const std::string& s);
ToolFamily family_from_string(const std::string& s);
EventKind kind_from_string(const std::string& s);
DeltaType delta_from_string(const std::string& s);
RiskCategory category_from_string(const std::string& s);

ToolFamily family_of(PrimitiveType t);

struct ObservableDelta {
    DeltaType type = DeltaType::fs_modify;
    std::string resource;
    std::int64_t magnitude = 0;

    bool operator==(const ObservableDelta&) const = default;
};

struct Event {
    int index = 0;
    EventKind kind = EventKind::action;
    PrimitiveType primitive = PrimitiveType::file_read;
    ToolFamily family = ToolFamily::file_ops;
    std::map<std::string, std::string> args;
    std::vector<ObservableDelta> deltas;
    std::vector<std::string> verdicts;

    bool is_action() const { return kind == EventKind::action; }
};

enum class TrajectoryLabel { safe, unsafe };

struct Trajectory {
    std::string id;
    std::string task_desc;
    std::vector<Event> events;
    TrajectoryLabel label = TrajectoryLabel::safe;
    bool success = false;

    bool has_verdicts() const;
};

// label == unsafe  <=>  at least one event carries a verdict; indices strict.
void validate_trajectory(const Trajectory& t);

Json to_json(const ObservableDelta& d);
Json to_json(const Event& e);
Json to_json(const Trajectory& t);
ObservableDelta delta_from_json(const Json& j);
Event event_from_json(const Json& j);
Trajectory trajectory_from_json(const Json& j);

std::string dump_canonical(const Json& j);

// One JSON document per trajectory; a directory is read in filename order,
// a single file may hold either one trajectory or an array of them.
std::vector<Trajectory> load_trajectories(const std::string& path);
void save_trajectory(const Trajectory& t, const std::string& file);

struct HardRecord {
    PrimitiveType type = PrimitiveType::file_write;
    std::string resource;
    std::string coarse_op;

    bool operator==(const HardRecord&) const = default;
};

struct NetDest {
    std::string domain;
    int port = 0;
    std::string scheme;

    bool operator==(const NetDest&) const = default;
};

struct ProcMeta {
    std::string executable;
    std::string argv_digest;

    bool operator==(const ProcMeta&) const = default;
};

struct PayloadMeta {
    std::int64_t length = 0;
    std::string content_hash;

    bool operator==(const PayloadMeta&) const = default;
};

/// The only input safety decisions are allowed to read. Built from event
/// bytes; free-text summaries never reach any field.
struct StructuredContext {
    PrimitiveType primitive = PrimitiveType::file_read;
    ToolFamily family = ToolFamily::file_ops;
    std::map<std::string, std::string> canonical_args;
    std::vector<std::string> workspace_roots;
    std::string cwd;
    std::optional<NetDest> net_dest;
    std::optional<ProcMeta> proc_meta;
    std::optional<PayloadMeta> payload_meta;
    std::vector<HardRecord> recent_hard_history;

    // provenance, not read by gates
    std::string trajectory_id;
    int event_index = -1;

    bool operator==(const StructuredContext&) const = default;
};

Json to_json(const StructuredContext& c);
StructuredContext ctx_from_json(const Json& j);

struct RiskClass {
    bool is_hard = false;
    RiskCategory category = RiskCategory::none;
    int risk_level = 0;
};

}  // namespace gbt
