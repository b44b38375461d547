#pragma once

#include <string>
#include <vector>

#include "gbt/context.hpp"
#include "gbt/gates.hpp"
#include "gbt/sim.hpp"

namespace gbt {

class MiningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct UnsafeWindow {
    std::string trajectory_id;
    int start_index = -1;  // inclusive event indices
    int end_index = -1;
    std::vector<std::string> verdict_ids;
    std::vector<StructuredContext> contexts;  // hard-primitive contexts inside the window
};

/// Deterministic replay shrinking: binary search for the earliest violating
/// prefix end, then advance the start while the violation persists, then
/// verify minimality with boundary-removal probes. Throws MiningError when
/// the recorded verdict does not reproduce under replay (quarantine).
UnsafeWindow shrink_window(const Replayer& replayer, const CtxOptions& ctx_opt);

/// Minimal contiguous span range covering [start_index, end_index].
std::pair<int, int> map_window_to_macros(const UnsafeWindow& window,
                                         const std::vector<std::pair<int, int>>& spans);

struct SynthesisResult {
    std::vector<Gate> gates;
    std::vector<std::string> failures;  // categories with no budget-respecting candidate
};

/// Candidate predicates are generated from the violating contexts, most
/// specific first (exact resource, then prefix, then structural motif), and
/// greedily disjoined until every positive is rejected; the assembled gate
/// must clear the benign budget via propose_update.
SynthesisResult synthesize_node_gates(const std::vector<StructuredContext>& contexts,
                                      const std::vector<StructuredContext>& benign_corpus,
                                      double eps_benign, const std::string& id_prefix,
                                      const EvalEnv& env);

struct CorpusEntry {
    StructuredContext ctx;
    int window_start = -1;
    int window_end = -1;
    std::vector<int> mapped_nodes;  // tree nodes the covering macros matched
    bool gated = false;             // a gate rejecting this ctx was accepted
};

Json to_json(const CorpusEntry& e);
CorpusEntry corpus_entry_from_json(const Json& j);
void save_corpus(const std::vector<CorpusEntry>& corpus, const std::string& file);
std::vector<CorpusEntry> load_corpus(const std::string& file);

}  // namespace gbt
