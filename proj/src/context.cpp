#include "gbt/context.hpp"

#include <algorithm>

#include "gbt/util.hpp"

namespace gbt {

std::string canonicalize_path(const std::string& raw, const std::vector<std::string>& roots) {
    if (raw.empty()) throw CanonError("empty path");
    std::string input = raw;
    if (input.front() != '/') {
        const std::string base = roots.empty() ? std::string("/") : roots.front();
        input = base + "/" + input;
    }
    std::vector<std::string> stack;
    for (const auto& seg : split(input, '/')) {
        if (seg.empty() || seg == ".") continue;
        if (seg == "..") {
            if (!stack.empty()) stack.pop_back();  // ".." above root stays at root
            continue;
        }
        stack.push_back(seg);
    }
    return "/" + join(stack, "/");
}

UrlParts parse_url(const std::string& raw) {
    const auto sep = raw.find("://");
    if (sep == std::string::npos || sep == 0) throw CanonError("malformed url: " + raw);
    UrlParts u;
    u.scheme = lower(raw.substr(0, sep));
    std::string rest = raw.substr(sep + 3);
    const auto slash = rest.find('/');
    std::string authority = slash == std::string::npos ? rest : rest.substr(0, slash);
    u.path = slash == std::string::npos ? "/" : rest.substr(slash);
    if (authority.empty()) throw CanonError("malformed url (no host): " + raw);
    const auto colon = authority.rfind(':');
    if (colon != std::string::npos) {
        const std::string port_s = authority.substr(colon + 1);
        if (port_s.empty() || port_s.find_first_not_of("0123456789") != std::string::npos)
            throw CanonError("malformed url (bad port): " + raw);
        u.port = std::stoi(port_s);
        authority = authority.substr(0, colon);
    } else if (u.scheme == "http") {
        u.port = 80;
    } else if (u.scheme == "https") {
        u.port = 443;
    }
    if (authority.empty()) throw CanonError("malformed url (no host): " + raw);
    u.domain = lower(authority);
    return u;
}

std::string url_to_canonical(const UrlParts& u) {
    return u.scheme + "://" + u.domain + ":" + std::to_string(u.port) + u.path;
}

CanonicalResource canonicalize_resource(const std::string& raw, ResourceNamespace ns,
                                        const std::vector<std::string>& workspace_roots) {
    if (raw.empty()) throw CanonError("empty resource");
    CanonicalResource out;
    switch (ns) {
        case ResourceNamespace::path: {
            out.canonical = canonicalize_path(raw, workspace_roots);
            break;
        }
        case ResourceNamespace::url: {
            out.canonical = url_to_canonical(parse_url(raw));
            break;
        }
        case ResourceNamespace::process: {
            out.canonical = raw.front() == '/' ? canonicalize_path(raw, workspace_roots) : raw;
            break;
        }
    }
    out.outside_root = true;
    for (const auto& root : workspace_roots) {
        if (path_has_root(out.canonical, root)) {
            out.outside_root = false;
            break;
        }
    }
    return out;
}

int risk_level_of(RiskCategory c) {
    switch (c) {
        case RiskCategory::write_delete: return 2;
        case RiskCategory::proc_spawn: return 3;
        case RiskCategory::net_send: return 3;
        case RiskCategory::sensitive_read: return 2;
        case RiskCategory::none: return 0;
    }
    return 0;
}

std::string coarse_op_of(PrimitiveType t) {
    switch (t) {
        case PrimitiveType::file_read: return "read";
        case PrimitiveType::file_write: return "write";
        case PrimitiveType::file_delete: return "delete";
        case PrimitiveType::proc_spawn: return "spawn";
        case PrimitiveType::net_send: return "send";
        case PrimitiveType::browse_nav: return "nav";
        case PrimitiveType::form_submit: return "submit";
        case PrimitiveType::code_exec: return "exec";
        case PrimitiveType::test_run: return "test";
    }
    return "?";
}

std::string primary_resource(PrimitiveType primitive,
                             const std::map<std::string, std::string>& canonical_args) {
    auto get = [&](const char* key) -> std::string {
        auto it = canonical_args.find(key);
        return it == canonical_args.end() ? std::string() : it->second;
    };
    switch (primitive) {
        case PrimitiveType::file_read:
        case PrimitiveType::file_write:
        case PrimitiveType::file_delete:
            return get("path");
        case PrimitiveType::net_send: {
            auto src = get("src");
            return src.empty() ? get("domain") : src;
        }
        case PrimitiveType::proc_spawn:
            return get("exe");
        case PrimitiveType::browse_nav:
        case PrimitiveType::form_submit:
            return get("url");
        case PrimitiveType::code_exec:
            return get("code_digest");
        case PrimitiveType::test_run:
            return get("cmd");
    }
    return {};
}

RiskClass classify_hard(PrimitiveType primitive,
                        const std::map<std::string, std::string>& canonical_args,
                        const std::vector<std::string>& sensitive_patterns) {
    RiskClass rc;
    switch (primitive) {
        case PrimitiveType::file_write:
        case PrimitiveType::file_delete:
            rc.category = RiskCategory::write_delete;
            break;
        case PrimitiveType::proc_spawn:
            rc.category = RiskCategory::proc_spawn;
            break;
        case PrimitiveType::net_send:
            rc.category = RiskCategory::net_send;
            break;
        case PrimitiveType::file_read:
        case PrimitiveType::browse_nav: {
            const std::string res = primary_resource(primitive, canonical_args);
            rc.category = (!res.empty() && matches_any_glob(sensitive_patterns, res))
                              ? RiskCategory::sensitive_read
                              : RiskCategory::none;
            break;
        }
        case PrimitiveType::form_submit:
        case PrimitiveType::code_exec:
        case PrimitiveType::test_run:
            rc.category = RiskCategory::none;
            break;
    }
    rc.is_hard = rc.category != RiskCategory::none;
    rc.risk_level = risk_level_of(rc.category);
    return rc;
}

namespace {

std::map<std::string, std::string> canonicalize_args(const Event& e, const CtxOptions& opt) {
    std::map<std::string, std::string> out = e.args;
    auto canon_path_arg = [&](const char* key) {
        auto it = out.find(key);
        if (it != out.end() && !it->second.empty())
            it->second = canonicalize_path(it->second, opt.workspace_roots);
    };
    canon_path_arg("path");
    canon_path_arg("src");
    canon_path_arg("from");
    auto it = out.find("url");
    if (it != out.end() && !it->second.empty()) it->second = url_to_canonical(parse_url(it->second));
    auto dit = out.find("domain");
    if (dit != out.end()) dit->second = lower(dit->second);
    return out;
}

}  // namespace

StructuredContext build_ctx(const Trajectory& t, int event_index, const CtxOptions& opt) {
    const auto it = std::find_if(t.events.begin(), t.events.end(),
                                 [&](const Event& e) { return e.index == event_index; });
    if (it == t.events.end()) throw SchemaError("event index out of range");
    const Event& ev = *it;
    if (!ev.is_action()) throw SchemaError("context requested for non-action event");

    StructuredContext ctx;
    ctx.primitive = ev.primitive;
    ctx.family = ev.family;
    ctx.workspace_roots = opt.workspace_roots;
    ctx.cwd = !opt.cwd.empty() ? opt.cwd
              : !opt.workspace_roots.empty() ? opt.workspace_roots.front()
                                             : "/";
    ctx.canonical_args = canonicalize_args(ev, opt);
    ctx.trajectory_id = t.id;
    ctx.event_index = event_index;

    if (ev.primitive == PrimitiveType::net_send) {
        NetDest n;
        auto get = [&](const char* k) {
            auto i = ctx.canonical_args.find(k);
            return i == ctx.canonical_args.end() ? std::string() : i->second;
        };
        n.domain = get("domain");
        n.scheme = get("scheme").empty() ? "https" : get("scheme");
        const auto port_s = get("port");
        n.port = port_s.empty() ? (n.scheme == "http" ? 80 : 443) : std::stoi(port_s);
        ctx.net_dest = n;
    } else if (ev.primitive == PrimitiveType::browse_nav ||
               ev.primitive == PrimitiveType::form_submit) {
        auto i = ctx.canonical_args.find("url");
        if (i != ctx.canonical_args.end()) {
            const UrlParts u = parse_url(i->second);
            ctx.net_dest = NetDest{u.domain, u.port, u.scheme};
        }
    }
    if (ev.primitive == PrimitiveType::proc_spawn) {
        ProcMeta p;
        auto i = ctx.canonical_args.find("exe");
        p.executable = i == ctx.canonical_args.end() ? "" : i->second;
        auto a = ctx.canonical_args.find("argv");
        p.argv_digest = to_hex(fnv1a64(a == ctx.canonical_args.end() ? "" : a->second));
        ctx.proc_meta = p;
    }
    {
        auto len = ctx.canonical_args.find("payload_len");
        auto hash = ctx.canonical_args.find("payload_hash");
        if (len != ctx.canonical_args.end() || hash != ctx.canonical_args.end()) {
            PayloadMeta p;
            p.length = len == ctx.canonical_args.end() ? 0 : std::stoll(len->second);
            p.content_hash = hash == ctx.canonical_args.end() ? "" : hash->second;
            ctx.payload_meta = p;
        }
    }

    const int scope_begin = opt.scope ? opt.scope->first : t.events.front().index;
    for (const Event& prev : t.events) {
        if (prev.index >= event_index) break;
        if (prev.index < scope_begin || !prev.is_action()) continue;
        const auto args = canonicalize_args(prev, opt);
        const RiskClass rc = classify_hard(prev.primitive, args, opt.sensitive_patterns);
        if (!rc.is_hard) continue;
        ctx.recent_hard_history.push_back(
            HardRecord{prev.primitive, primary_resource(prev.primitive, args),
                       coarse_op_of(prev.primitive)});
    }
    const std::size_t bound = static_cast<std::size_t>(std::max(opt.history_bound, 0));
    if (ctx.recent_hard_history.size() > bound) {
        ctx.recent_hard_history.erase(
            ctx.recent_hard_history.begin(),
            ctx.recent_hard_history.end() - static_cast<std::ptrdiff_t>(bound));
    }
    return ctx;
}

}  // namespace gbt
