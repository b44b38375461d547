#pragma once

#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "gbt/context.hpp"
#include "gbt/embedding.hpp"
#include "gbt/events.hpp"

namespace gbt {

/// Exact-match discrete signature features, computed from logs only.
struct DiscreteSignature {
    std::map<std::string, int> family_counts;  // tool family -> action count
    std::set<std::string> resource_kinds;      // path / url / process
    bool hard_touch = false;
    std::set<std::string> delta_types;

    bool operator==(const DiscreteSignature&) const = default;
    std::string canonical() const;  // stable text form, used for hashing/buckets
};

struct MacroSpan {
    int start_index = 0;  // inclusive event indices (action events)
    int end_index = 0;
    std::string description;
    std::vector<std::string> tags;
    RiskClass risk;  // max over the span
    DiscreteSignature sigma_disc;
    Vec sigma_cont;  // unit L2 norm unless all-zero
    bool degraded_description = false;
};

struct ExtractorOptions {
    // cumulative fs-delta magnitude that closes a span
    std::int64_t fs_boundary_magnitude = 200;
    std::vector<std::string> sensitive_patterns;
    std::vector<std::string> workspace_roots;
};

/// Deterministic segmentation anchored on observable deltas and
/// tool-family switches; returns [start,end] action-index pairs that
/// partition the trajectory's action events.
std::vector<std::pair<int, int>> segment(const Trajectory& t, const ExtractorOptions& opt);

/// (sigma_disc, sigma_cont) for the action events inside [start,end].
std::pair<DiscreteSignature, Vec> signature(const Trajectory& t, int start_index, int end_index,
                                            const ExtractorOptions& opt);

struct MacroSummary {
    std::string macro_desc;
    std::vector<std::string> macro_tags;
    std::vector<std::string> resources;
    bool hard_touch = false;
};

/// Summarizer port: (events, deltas) -> {macro_desc, macro_tags, resources,
/// hard_touch}. seed selects a prompt perturbation; deterministic per seed.
class Summarizer {
public:
    virtual ~Summarizer() = default;
    virtual MacroSummary summarize(const std::vector<const Event*>& events,
                                   const ExtractorOptions& opt, unsigned seed) const = 0;
};

/// Reference summarizer: fixed templates over primitive types and
/// canonical resources. Seed-independent by construction.
class TemplateSummarizer final : public Summarizer {
public:
    MacroSummary summarize(const std::vector<const Event*>& events, const ExtractorOptions& opt,
                           unsigned seed) const override;
};

/// Summarizer port failure handling lives here: one retry, then a
/// placeholder description flagged degraded.
MacroSpan describe_span(const Trajectory& t, int start_index, int end_index,
                        const Summarizer& summarizer, const ExtractorOptions& opt);

std::vector<MacroSpan> extract_macros(const Trajectory& t, const Summarizer& summarizer,
                                      const ExtractorOptions& opt);

struct StabilityReport {
    std::vector<std::set<int>> boundary_sets;  // P+1 boundary index sets
    double pairwise_jaccard_min = 1.0;
    bool stable = true;
};

/// Segmentation functor used by the stability test; the default is the
/// deterministic segmenter (seed ignored), a stochastic variant can be
/// injected for testing.
using SegmentFn =
    std::function<std::vector<std::pair<int, int>>(const Trajectory&, unsigned seed)>;

double jaccard(const std::set<int>& a, const std::set<int>& b);

StabilityReport stability_test(const Trajectory& t, int perturbations, double delta_stab,
                               const ExtractorOptions& opt, const SegmentFn& segment_fn = {});

}  // namespace gbt
