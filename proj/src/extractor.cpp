#include "gbt/extractor.hpp"

#include <algorithm>

#include "gbt/util.hpp"

namespace gbt {

std::string DiscreteSignature::canonical() const {
    std::string out = "fam{";
    for (const auto& [f, n] : family_counts) out += f + ":" + std::to_string(n) + ",";
    out += "}res{";
    for (const auto& r : resource_kinds) out += r + ",";
    out += "}hard:" + std::string(hard_touch ? "1" : "0") + ";deltas{";
    for (const auto& d : delta_types) out += d + ",";
    out += "}";
    return out;
}

namespace {

bool has_delta(const Event& e, DeltaType t) {
    return std::any_of(e.deltas.begin(), e.deltas.end(),
                       [&](const ObservableDelta& d) { return d.type == t; });
}

std::int64_t fs_magnitude(const Event& e) {
    std::int64_t total = 0;
    for (const auto& d : e.deltas) {
        if (d.type == DeltaType::fs_create || d.type == DeltaType::fs_modify ||
            d.type == DeltaType::fs_delete)
            total += d.magnitude;
    }
    return total;
}

}  // namespace

std::vector<std::pair<int, int>> segment(const Trajectory& t, const ExtractorOptions& opt) {
    std::vector<const Event*> actions;
    for (const auto& e : t.events)
        if (e.is_action()) actions.push_back(&e);
    std::vector<std::pair<int, int>> spans;
    if (actions.empty()) return spans;

    int span_start = actions.front()->index;
    int span_last = span_start;
    ToolFamily span_family = actions.front()->family;
    bool span_has_process = actions.front()->family == ToolFamily::process;
    std::int64_t span_fs = fs_magnitude(*actions.front());
    bool force_close = has_delta(*actions.front(), DeltaType::test_invocation) ||
                       span_fs > opt.fs_boundary_magnitude;

    auto close_span = [&](int end) { spans.emplace_back(span_start, end); };

    for (std::size_t i = 1; i < actions.size(); ++i) {
        const Event& e = *actions[i];
        const bool family_switch = e.family != span_family;
        const bool domain_boundary = has_delta(e, DeltaType::domain_change);
        const bool test_boundary = has_delta(e, DeltaType::test_invocation);
        const bool proc_boundary = has_delta(e, DeltaType::proc_start) && !span_has_process;
        if (force_close || family_switch || domain_boundary || test_boundary || proc_boundary) {
            close_span(span_last);
            span_start = e.index;
            span_family = e.family;
            span_has_process = false;
            span_fs = 0;
            force_close = false;
        }
        span_last = e.index;
        span_has_process = span_has_process || e.family == ToolFamily::process;
        span_fs += fs_magnitude(e);
        if (test_boundary || span_fs > opt.fs_boundary_magnitude) force_close = true;
    }
    close_span(span_last);
    return spans;
}

std::pair<DiscreteSignature, Vec> signature(const Trajectory& t, int start_index, int end_index,
                                            const ExtractorOptions& opt) {
    DiscreteSignature disc;
    Vec cont(kToolFamilyCount + 1 + kDeltaTypeCount, 0.0);
    for (const auto& e : t.events) {
        if (!e.is_action() || e.index < start_index || e.index > end_index) continue;
        disc.family_counts[to_string(e.family)] += 1;
        cont[static_cast<std::size_t>(e.family)] += 1.0;
        const RiskClass rc = classify_hard(e.primitive, e.args, opt.sensitive_patterns);
        disc.hard_touch = disc.hard_touch || rc.is_hard;
        switch (e.primitive) {
            case PrimitiveType::file_read:
            case PrimitiveType::file_write:
            case PrimitiveType::file_delete:
                disc.resource_kinds.insert("path");
                break;
            case PrimitiveType::net_send:
            case PrimitiveType::browse_nav:
            case PrimitiveType::form_submit:
                disc.resource_kinds.insert("url");
                break;
            case PrimitiveType::proc_spawn:
                disc.resource_kinds.insert("process");
                break;
            default:
                break;
        }
        for (const auto& d : e.deltas) {
            disc.delta_types.insert(to_string(d.type));
            cont[kToolFamilyCount + 1 + static_cast<std::size_t>(d.type)] += 1.0;
        }
        cont[kToolFamilyCount] += static_cast<double>(fs_magnitude(e));
    }
    l2_normalize(cont);
    return {disc, cont};
}

MacroSummary TemplateSummarizer::summarize(const std::vector<const Event*>& events,
                                           const ExtractorOptions& opt, unsigned /*seed*/) const {
    MacroSummary out;
    std::vector<std::string> clauses;
    std::set<std::string> tags;
    std::vector<std::string> resources;
    auto note_resource = [&](const std::string& r) {
        if (r.empty()) return;
        if (std::find(resources.begin(), resources.end(), r) == resources.end() &&
            resources.size() < 8)
            resources.push_back(r);
    };

    auto basename = [](const std::string& p) {
        const auto pos = p.rfind('/');
        return pos == std::string::npos ? p : p.substr(pos + 1);
    };
    auto common_dir = [](const std::vector<std::string>& paths) {
        std::string prefix = paths.front();
        for (const auto& p : paths) {
            std::size_t i = 0;
            while (i < prefix.size() && i < p.size() && prefix[i] == p[i]) ++i;
            prefix = prefix.substr(0, i);
        }
        const auto cut = prefix.rfind('/');
        return cut == 0 ? "/" : cut == std::string::npos ? prefix : prefix.substr(0, cut);
    };

    std::vector<std::string> writes, reads, deletes;
    std::vector<std::string> tail_clauses;
    for (const Event* e : events) {
        const auto arg = [&](const char* k) {
            auto it = e->args.find(k);
            return it == e->args.end() ? std::string() : it->second;
        };
        tags.insert(to_string(e->family));
        tags.insert(coarse_op_of(e->primitive));
        const RiskClass rc = classify_hard(e->primitive, e->args, opt.sensitive_patterns);
        out.hard_touch = out.hard_touch || rc.is_hard;
        switch (e->primitive) {
            case PrimitiveType::file_write: {
                writes.push_back(canonicalize_path(arg("path"), opt.workspace_roots));
                note_resource(writes.back());
                break;
            }
            case PrimitiveType::file_read: {
                reads.push_back(canonicalize_path(arg("path"), opt.workspace_roots));
                note_resource(reads.back());
                break;
            }
            case PrimitiveType::file_delete: {
                deletes.push_back(canonicalize_path(arg("path"), opt.workspace_roots));
                note_resource(deletes.back());
                break;
            }
            case PrimitiveType::proc_spawn:
                tail_clauses.push_back("spawn " + arg("exe"));
                note_resource(arg("exe"));
                break;
            case PrimitiveType::net_send:
                tail_clauses.push_back("send data to " + lower(arg("domain")));
                note_resource(lower(arg("domain")));
                break;
            case PrimitiveType::browse_nav: {
                const UrlParts u = parse_url(arg("url"));
                tail_clauses.push_back("browse " + u.domain);
                note_resource(u.domain);
                break;
            }
            case PrimitiveType::form_submit: {
                const UrlParts u = parse_url(arg("url"));
                tail_clauses.push_back("submit form on " + u.domain);
                note_resource(u.domain);
                break;
            }
            case PrimitiveType::code_exec:
                tail_clauses.push_back("run code");
                break;
            case PrimitiveType::test_run:
                tail_clauses.push_back("run tests");
                note_resource(arg("cmd"));
                break;
        }
    }
    auto file_clause = [&](const char* one_verb, const char* many_verb,
                           const std::vector<std::string>& paths) {
        if (paths.empty()) return;
        if (paths.size() == 1) {
            clauses.push_back(std::string(one_verb) + " " + basename(paths.front()));
        } else {
            clauses.push_back(std::string(many_verb) + " " + std::to_string(paths.size()) +
                              " files under " + common_dir(paths));
        }
    };
    file_clause("read", "read", reads);
    file_clause("modify", "edit", writes);
    file_clause("delete", "delete", deletes);
    // keep first occurrence only for repeated tail clauses
    for (const auto& c : tail_clauses)
        if (std::find(clauses.begin(), clauses.end(), c) == clauses.end()) clauses.push_back(c);

    out.macro_desc = join(clauses, "; ");
    out.macro_tags.assign(tags.begin(), tags.end());
    out.resources = resources;
    return out;
}

MacroSpan describe_span(const Trajectory& t, int start_index, int end_index,
                        const Summarizer& summarizer, const ExtractorOptions& opt) {
    MacroSpan span;
    span.start_index = start_index;
    span.end_index = end_index;
    std::vector<const Event*> events;
    int max_risk = 0;
    RiskCategory max_cat = RiskCategory::none;
    for (const auto& e : t.events) {
        if (!e.is_action() || e.index < start_index || e.index > end_index) continue;
        events.push_back(&e);
        const RiskClass rc = classify_hard(e.primitive, e.args, opt.sensitive_patterns);
        if (rc.risk_level > max_risk) {
            max_risk = rc.risk_level;
            max_cat = rc.category;
        }
    }
    span.risk = RiskClass{max_cat != RiskCategory::none, max_cat, max_risk};
    std::tie(span.sigma_disc, span.sigma_cont) = signature(t, start_index, end_index, opt);

    MacroSummary summary;
    bool described = false;
    for (int attempt = 0; attempt < 2 && !described; ++attempt) {
        try {
            summary = summarizer.summarize(events, opt, 0);
            described = !summary.macro_desc.empty();
        } catch (const std::exception&) {
            described = false;
        }
    }
    if (!described) {
        std::string blob = t.id;
        for (const Event* e : events) blob += "|" + to_string(e->primitive);
        summary.macro_desc = "macro@" + to_hex(fnv1a64(blob));
        span.degraded_description = true;
    }
    span.description = summary.macro_desc;
    span.tags = summary.macro_tags;
    return span;
}

std::vector<MacroSpan> extract_macros(const Trajectory& t, const Summarizer& summarizer,
                                      const ExtractorOptions& opt) {
    std::vector<MacroSpan> out;
    for (const auto& [start, end] : segment(t, opt))
        out.push_back(describe_span(t, start, end, summarizer, opt));
    return out;
}

double jaccard(const std::set<int>& a, const std::set<int>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (int x : a) inter += b.count(x);
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

StabilityReport stability_test(const Trajectory& t, int perturbations, double delta_stab,
                               const ExtractorOptions& opt, const SegmentFn& segment_fn) {
    StabilityReport report;
    const SegmentFn fn = segment_fn
                             ? segment_fn
                             : [&opt](const Trajectory& traj, unsigned) { return segment(traj, opt); };
    for (int p = 0; p <= perturbations; ++p) {
        std::set<int> boundaries;
        for (const auto& [start, end] : fn(t, static_cast<unsigned>(p))) boundaries.insert(start);
        report.boundary_sets.push_back(std::move(boundaries));
    }
    for (std::size_t i = 0; i < report.boundary_sets.size(); ++i)
        for (std::size_t j = i + 1; j < report.boundary_sets.size(); ++j)
            report.pairwise_jaccard_min = std::min(
                report.pairwise_jaccard_min,
                jaccard(report.boundary_sets[i], report.boundary_sets[j]));
    report.stable = report.pairwise_jaccard_min >= delta_stab;
    return report;
}

}  // namespace gbt
