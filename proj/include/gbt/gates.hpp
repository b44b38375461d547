#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gbt/events.hpp"

namespace gbt {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t column)
        : std::runtime_error(what + " at column " + std::to_string(column)), column(column) {}
    std::size_t column;
};

enum class ExprKind {
    field_equals,
    path_under_roots,
    path_matches,
    domain_in,
    port_in,
    motif,
    payload_flag,
    and_,
    or_,
    not_,
};

struct MotifStep {
    RiskCategory category = RiskCategory::none;
    bool same_artifact = false;  // steps flagged true must share one resource

    bool operator==(const MotifStep&) const = default;
};

/// Deterministic predicate over StructuredContext fields. True means the
/// violation condition matched. Serializes to a canonical s-expression.
struct GateExpr {
    ExprKind kind = ExprKind::and_;
    std::string field;               // field_equals / path_under_roots / path_matches
    std::string literal;             // field_equals value, path_matches glob,
                                     // domain_in allowlist name, payload_flag label
    std::vector<int> ports;          // port_in, sorted unique
    std::vector<MotifStep> steps;    // motif
    std::vector<GateExpr> children;  // and/or/not

    bool operator==(const GateExpr&) const = default;

    static constexpr int kMaxDepth = 16;
};

GateExpr make_field_equals(std::string field, std::string literal);
GateExpr make_path_under_roots(std::string field);
GateExpr make_path_matches(std::string field, std::string glob);
GateExpr make_domain_in(std::string allowlist_name);
GateExpr make_port_in(std::vector<int> ports);
GateExpr make_motif(std::vector<MotifStep> steps);
GateExpr make_payload_flag(std::string label);
GateExpr make_and(std::vector<GateExpr> children);
GateExpr make_or(std::vector<GateExpr> children);
GateExpr make_not(GateExpr child);

/// Parses the s-expression DSL. Throws ParseError with a column on syntax
/// errors, unknown operators, unknown field paths, or depth overflow.
GateExpr parse_expr(const std::string& text, bool allow_payload = true);
/// Canonical text; parse_expr(print_expr(e)) == e and printing is a fixpoint.
std::string print_expr(const GateExpr& e);

void validate_expr(const GateExpr& e, bool allow_payload = true);

/// Port for content-gate payload classification; deterministic by contract.
class PayloadClassifier {
public:
    virtual ~PayloadClassifier() = default;
    virtual std::vector<std::string> labels(const StructuredContext& ctx) const = 0;
};

/// Reference classifier: case-insensitive keyword lists per label applied
/// to the payload excerpt carried in canonical_args.
class KeywordClassifier final : public PayloadClassifier {
public:
    explicit KeywordClassifier(std::map<std::string, std::vector<std::string>> keywords)
        : keywords_(std::move(keywords)) {}
    std::vector<std::string> labels(const StructuredContext& ctx) const override;

private:
    std::map<std::string, std::vector<std::string>> keywords_;
};

struct EvalEnv {
    const std::map<std::string, std::vector<std::string>>* allowlists = nullptr;
    const PayloadClassifier* classifier = nullptr;
};

struct EvalOutcome {
    bool value = false;
    std::string error;  // nonempty -> evaluation failed (callers fail closed)

    bool ok() const { return error.empty(); }
};

EvalOutcome eval_expr(const GateExpr& e, const StructuredContext& ctx, const EvalEnv& env);

enum class GateScope { global, node_local };
enum class GateKind { rule, content };

struct GateVerdict {
    bool ok = true;
    std::string msg;  // nonempty whenever ok is false
};

struct Gate {
    std::string id;
    GateScope scope = GateScope::global;
    int node_id = -1;  // node_local only
    GateKind kind = GateKind::rule;
    GateExpr expr;
    std::string message_template;
    std::vector<std::string> corpus_refs;
};

Json gate_to_json(const Gate& g);
Gate gate_from_json(const Json& j);

GateVerdict eval_gate(const Gate& g, const StructuredContext& ctx, const EvalEnv& env);

struct GateDecision {
    bool ok = true;
    std::optional<GateVerdict> first_failure;
    std::string gate_id;
};

struct GateLibrary {
    std::vector<Gate> gates;  // kept sorted by id; evaluation order == id order
    std::map<std::string, std::vector<std::string>> allowlists;

    void add_gate(Gate g);
    const Gate* find(const std::string& id) const;
    Gate* find(const std::string& id);
    std::vector<const Gate*> global_gates() const;
    std::string safety_hash() const;

    Json to_json() const;
    static GateLibrary from_json(const Json& j);
};

/// Conjunction over all global gates in id order; short-circuits but
/// reports the first failing verdict.
GateDecision hard_gate_ok(const GateLibrary& lib, const StructuredContext& ctx,
                          const PayloadClassifier* classifier = nullptr);
GateDecision node_gate_ok(const std::vector<Gate>& node_gates, const StructuredContext& ctx,
                          const EvalEnv& env);

struct UpdateCheck {
    bool accepted = false;
    std::string reason;   // empty when accepted
    std::string witness;  // "trajectory_id:event_index" of the first violating ctx
    double benign_fp = 0.0;
    bool vacuous_benign = false;
};

/// Monotonicity + benign-regression control. Accepted iff every unsafe ctx
/// rejected by gate_old stays rejected by gate_new and the benign rejection
/// fraction stays within eps_benign.
UpdateCheck propose_update(const Gate& gate_old, const Gate& gate_new,
                           const std::vector<StructuredContext>& unsafe_corpus,
                           const std::vector<StructuredContext>& benign_corpus,
                           double eps_benign, const EvalEnv& env);

/// Structured environment summary consumed by preconditions and the
/// recovery signature. Never contains free text.
struct EnvSummary {
    std::vector<std::string> files;  // canonical paths, sorted
    std::string domain;
    std::vector<std::string> tools;
    std::map<std::string, int> risk_counts;  // category name -> executed count
};

Json to_json(const EnvSummary& e);
EnvSummary env_summary_from_json(const Json& j);

/// Precondition evaluation: same expression kinds minus payload/content
/// leaves, over the environment summary. True means feasible.
EvalOutcome eval_env_expr(const GateExpr& e, const EnvSummary& env);

RiskCategory category_of_hard_primitive(PrimitiveType t);

}  // namespace gbt
