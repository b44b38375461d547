#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gbt/events.hpp"

namespace gbt {

class CanonError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ResourceNamespace { path, url, process };

struct CanonicalResource {
    std::string canonical;
    bool outside_root = false;
};

struct UrlParts {
    std::string scheme;
    std::string domain;
    int port = 0;
    std::string path;
};

// Purely lexical: "." / ".." segments resolved, no filesystem access.
// Idempotent. Relative inputs are anchored at the first workspace root.
std::string canonicalize_path(const std::string& raw, const std::vector<std::string>& roots = {});

// Lowercases scheme/domain, fills default ports (http 80, https 443).
// Throws CanonError on malformed input.
UrlParts parse_url(const std::string& raw);
std::string url_to_canonical(const UrlParts& u);

CanonicalResource canonicalize_resource(const std::string& raw, ResourceNamespace ns,
                                        const std::vector<std::string>& workspace_roots);

/// Hard-primitive designation. sensitive_patterns are glob-style
/// (e.g. "/secrets/*", "*.pem") and apply to read-class primitives.
RiskClass classify_hard(PrimitiveType primitive,
                        const std::map<std::string, std::string>& canonical_args,
                        const std::vector<std::string>& sensitive_patterns);

int risk_level_of(RiskCategory c);
std::string coarse_op_of(PrimitiveType t);

// The canonical resource a primitive acts on (path, sent artifact, url,
// executable); empty when none applies.
std::string primary_resource(PrimitiveType primitive,
                             const std::map<std::string, std::string>& canonical_args);

struct CtxOptions {
    int history_bound = 4;  // H
    std::vector<std::string> workspace_roots;
    std::vector<std::string> sensitive_patterns;
    std::string cwd;  // defaults to first workspace root
    // History scope [begin,end) over event indices; the whole trajectory
    // when absent.
    std::optional<std::pair<int, int>> scope;
};

/// Builds the structured context for the action event at `event_index`.
/// Deterministic in the trajectory bytes. recent_hard_history holds the
/// <= H most recent hard actions before event_index inside the scope,
/// most recent last.
StructuredContext build_ctx(const Trajectory& t, int event_index, const CtxOptions& opt);

}  // namespace gbt
