#include "gbt/gates.hpp"

#include <algorithm>
#include <functional>

#include "gbt/context.hpp"
#include "gbt/util.hpp"

namespace gbt {
namespace {

const char* op_name(ExprKind k) {
    switch (k) {
        case ExprKind::field_equals: return "field=";
        case ExprKind::path_under_roots: return "path-under-roots";
        case ExprKind::path_matches: return "path-matches";
        case ExprKind::domain_in: return "domain-in";
        case ExprKind::port_in: return "port-in";
        case ExprKind::motif: return "motif";
        case ExprKind::payload_flag: return "payload-flag";
        case ExprKind::and_: return "and";
        case ExprKind::or_: return "or";
        case ExprKind::not_: return "not";
    }
    return "?";
}

bool bare_atom_ok(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || std::string_view("_./:*?@+=-").find(c) !=
                                                      std::string_view::npos;
        if (!ok) return false;
    }
    return true;
}

std::string print_atom(const std::string& s) {
    if (bare_atom_ok(s)) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

// ---- tokenizer ----

struct Token {
    enum Type { lparen, rparen, atom, end } type;
    std::string text;
    std::size_t column;  // 1-based
};

class Lexer {
public:
    explicit Lexer(const std::string& s) : s_(s) {}

    Token next() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n'))
            ++pos_;
        const std::size_t col = pos_ + 1;
        if (pos_ >= s_.size()) return {Token::end, "", col};
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            return {Token::lparen, "(", col};
        }
        if (c == ')') {
            ++pos_;
            return {Token::rparen, ")", col};
        }
        if (c == '"') {
            ++pos_;
            std::string out;
            while (pos_ < s_.size() && s_[pos_] != '"') {
                if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
                out.push_back(s_[pos_++]);
            }
            if (pos_ >= s_.size()) throw ParseError("unterminated string", col);
            ++pos_;
            return {Token::atom, out, col};
        }
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != ' ' && s_[pos_] != '\t' && s_[pos_] != '\n' &&
               s_[pos_] != '(' && s_[pos_] != ')' && s_[pos_] != '"')
            out.push_back(s_[pos_++]);
        return {Token::atom, out, col};
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;
};

const std::vector<std::string>& known_field_roots() {
    static const std::vector<std::string> roots{
        "primitive_type", "tool_family", "cwd",      "canonical_args", "net_dest",
        "proc_meta",      "payload_meta", "domain",  "files",          "tools"};
    return roots;
}

void check_field_path(const std::string& field, std::size_t column) {
    const auto parts = split(field, '.');
    const std::string& root = parts.front();
    if (std::find(known_field_roots().begin(), known_field_roots().end(), root) ==
        known_field_roots().end())
        throw ParseError("unknown field path: " + field, column);
    if (root == "net_dest") {
        if (parts.size() != 2 ||
            (parts[1] != "domain" && parts[1] != "port" && parts[1] != "scheme"))
            throw ParseError("unknown field path: " + field, column);
    } else if (root == "proc_meta") {
        if (parts.size() != 2 || (parts[1] != "executable" && parts[1] != "argv_digest"))
            throw ParseError("unknown field path: " + field, column);
    } else if (root == "payload_meta") {
        if (parts.size() != 2 || (parts[1] != "length" && parts[1] != "content_hash"))
            throw ParseError("unknown field path: " + field, column);
    } else if (root == "canonical_args" || root == "tools") {
        if (parts.size() != 2 || parts[1].empty())
            throw ParseError("unknown field path: " + field, column);
    } else if (parts.size() != 1) {
        throw ParseError("unknown field path: " + field, column);
    }
}

class Parser {
public:
    Parser(const std::string& text, bool allow_payload)
        : lex_(text), allow_payload_(allow_payload) {
        tok_ = lex_.next();
    }

    GateExpr parse() {
        GateExpr e = expr(1);
        if (tok_.type != Token::end) throw ParseError("trailing input", tok_.column);
        return e;
    }

private:
    void advance() { tok_ = lex_.next(); }

    Token expect(Token::Type t, const char* what) {
        if (tok_.type != t) throw ParseError(std::string("expected ") + what, tok_.column);
        Token out = tok_;
        advance();
        return out;
    }

    std::string atom(const char* what) { return expect(Token::atom, what).text; }

    GateExpr expr(int depth) {
        if (depth > GateExpr::kMaxDepth) throw ParseError("expression depth exceeded", tok_.column);
        expect(Token::lparen, "'('");
        const Token head = expect(Token::atom, "operator");
        GateExpr e;
        if (head.text == "field=") {
            e.kind = ExprKind::field_equals;
            const Token f = expect(Token::atom, "field path");
            check_field_path(f.text, f.column);
            e.field = f.text;
            e.literal = atom("literal");
        } else if (head.text == "path-under-roots") {
            e.kind = ExprKind::path_under_roots;
            const Token f = expect(Token::atom, "field path");
            check_field_path(f.text, f.column);
            e.field = f.text;
        } else if (head.text == "path-matches") {
            e.kind = ExprKind::path_matches;
            const Token f = expect(Token::atom, "field path");
            check_field_path(f.text, f.column);
            e.field = f.text;
            e.literal = atom("glob");
        } else if (head.text == "domain-in") {
            e.kind = ExprKind::domain_in;
            e.literal = atom("allowlist name");
        } else if (head.text == "port-in") {
            e.kind = ExprKind::port_in;
            while (tok_.type == Token::atom) {
                const Token p = expect(Token::atom, "port");
                if (p.text.find_first_not_of("0123456789") != std::string::npos)
                    throw ParseError("bad port: " + p.text, p.column);
                e.ports.push_back(std::stoi(p.text));
            }
            if (e.ports.empty()) throw ParseError("port-in needs ports", tok_.column);
        } else if (head.text == "motif") {
            e.kind = ExprKind::motif;
            while (tok_.type == Token::lparen) {
                advance();
                const Token cat = expect(Token::atom, "risk category");
                MotifStep step;
                try {
                    step.category = category_from_string(cat.text);
                } catch (const SchemaError&) {
                    throw ParseError("unknown risk category: " + cat.text, cat.column);
                }
                const Token rel = expect(Token::atom, "relation");
                if (rel.text == "artifact")
                    step.same_artifact = true;
                else if (rel.text != "any")
                    throw ParseError("relation must be any|artifact", rel.column);
                expect(Token::rparen, "')'");
                e.steps.push_back(step);
            }
            if (e.steps.empty()) throw ParseError("motif needs steps", tok_.column);
        } else if (head.text == "payload-flag") {
            if (!allow_payload_)
                throw ParseError("payload-flag not allowed here", head.column);
            e.kind = ExprKind::payload_flag;
            e.literal = atom("label");
        } else if (head.text == "and" || head.text == "or") {
            e.kind = head.text == "and" ? ExprKind::and_ : ExprKind::or_;
            while (tok_.type == Token::lparen) e.children.push_back(expr(depth + 1));
            if (e.children.empty())
                throw ParseError(head.text + " needs operands", tok_.column);
        } else if (head.text == "not") {
            e.kind = ExprKind::not_;
            e.children.push_back(expr(depth + 1));
        } else {
            throw ParseError("unknown operator: " + head.text, head.column);
        }
        expect(Token::rparen, "')'");
        return e;
    }

    Lexer lex_;
    Token tok_{Token::end, "", 0};
    bool allow_payload_;
};

int depth_of(const GateExpr& e) {
    int d = 1;
    for (const auto& c : e.children) d = std::max(d, 1 + depth_of(c));
    return d;
}

}  // namespace

GateExpr make_field_equals(std::string field, std::string literal) {
    GateExpr e;
    e.kind = ExprKind::field_equals;
    e.field = std::move(field);
    e.literal = std::move(literal);
    return e;
}
GateExpr make_path_under_roots(std::string field) {
    GateExpr e;
    e.kind = ExprKind::path_under_roots;
    e.field = std::move(field);
    return e;
}
GateExpr make_path_matches(std::string field, std::string glob) {
    GateExpr e;
    e.kind = ExprKind::path_matches;
    e.field = std::move(field);
    e.literal = std::move(glob);
    return e;
}
GateExpr make_domain_in(std::string name) {
    GateExpr e;
    e.kind = ExprKind::domain_in;
    e.literal = std::move(name);
    return e;
}
GateExpr make_port_in(std::vector<int> ports) {
    GateExpr e;
    e.kind = ExprKind::port_in;
    std::sort(ports.begin(), ports.end());
    ports.erase(std::unique(ports.begin(), ports.end()), ports.end());
    e.ports = std::move(ports);
    return e;
}
GateExpr make_motif(std::vector<MotifStep> steps) {
    GateExpr e;
    e.kind = ExprKind::motif;
    e.steps = std::move(steps);
    return e;
}
GateExpr make_payload_flag(std::string label) {
    GateExpr e;
    e.kind = ExprKind::payload_flag;
    e.literal = std::move(label);
    return e;
}
GateExpr make_and(std::vector<GateExpr> children) {
    GateExpr e;
    e.kind = ExprKind::and_;
    e.children = std::move(children);
    return e;
}
GateExpr make_or(std::vector<GateExpr> children) {
    GateExpr e;
    e.kind = ExprKind::or_;
    e.children = std::move(children);
    return e;
}
GateExpr make_not(GateExpr child) {
    GateExpr e;
    e.kind = ExprKind::not_;
    e.children.push_back(std::move(child));
    return e;
}

GateExpr parse_expr(const std::string& text, bool allow_payload) {
    return Parser(text, allow_payload).parse();
}

std::string print_expr(const GateExpr& e) {
    std::string out = "(";
    out += op_name(e.kind);
    switch (e.kind) {
        case ExprKind::field_equals:
            out += " " + print_atom(e.field) + " " + print_atom(e.literal);
            break;
        case ExprKind::path_under_roots:
            out += " " + print_atom(e.field);
            break;
        case ExprKind::path_matches:
            out += " " + print_atom(e.field) + " " + print_atom(e.literal);
            break;
        case ExprKind::domain_in:
        case ExprKind::payload_flag:
            out += " " + print_atom(e.literal);
            break;
        case ExprKind::port_in: {
            auto ports = e.ports;
            std::sort(ports.begin(), ports.end());
            for (int p : ports) out += " " + std::to_string(p);
            break;
        }
        case ExprKind::motif:
            for (const auto& s : e.steps)
                out += " (" + to_string(s.category) + (s.same_artifact ? " artifact" : " any") + ")";
            break;
        case ExprKind::and_:
        case ExprKind::or_:
        case ExprKind::not_:
            for (const auto& c : e.children) out += " " + print_expr(c);
            break;
    }
    out += ")";
    return out;
}

void validate_expr(const GateExpr& e, bool allow_payload) {
    // Round-tripping through the parser enforces every structural rule.
    parse_expr(print_expr(e), allow_payload);
    if (depth_of(e) > GateExpr::kMaxDepth) throw ParseError("expression depth exceeded", 0);
}

std::vector<std::string> KeywordClassifier::labels(const StructuredContext& ctx) const {
    std::vector<std::string> out;
    const auto it = ctx.canonical_args.find("payload_excerpt");
    if (it == ctx.canonical_args.end()) return out;
    const std::string text = lower(it->second);
    for (const auto& [label, words] : keywords_) {
        for (const auto& w : words) {
            if (text.find(lower(w)) != std::string::npos) {
                out.push_back(label);
                break;
            }
        }
    }
    return out;
}

namespace {

// "" means absent; callers decide whether absence is an error.
struct FieldValue {
    bool present = false;
    std::string value;
    std::string error;
};

FieldValue resolve_ctx_field(const StructuredContext& ctx, const std::string& field) {
    FieldValue out;
    const auto parts = split(field, '.');
    const std::string& root = parts.front();
    auto found = [&](std::string v) {
        out.present = true;
        out.value = std::move(v);
        return out;
    };
    if (root == "primitive_type") return found(to_string(ctx.primitive));
    if (root == "tool_family") return found(to_string(ctx.family));
    if (root == "cwd") {
        if (ctx.cwd.empty()) {
            out.error = "required field cwd missing";
            return out;
        }
        return found(ctx.cwd);
    }
    if (root == "canonical_args") {
        const auto it = ctx.canonical_args.find(parts[1]);
        if (it == ctx.canonical_args.end()) return out;
        return found(it->second);
    }
    if (root == "net_dest") {
        if (!ctx.net_dest) return out;
        if (parts[1] == "domain") return found(ctx.net_dest->domain);
        if (parts[1] == "port") return found(std::to_string(ctx.net_dest->port));
        return found(ctx.net_dest->scheme);
    }
    if (root == "proc_meta") {
        if (!ctx.proc_meta) return out;
        return found(parts[1] == "executable" ? ctx.proc_meta->executable
                                              : ctx.proc_meta->argv_digest);
    }
    if (root == "payload_meta") {
        if (!ctx.payload_meta) return out;
        return found(parts[1] == "length" ? std::to_string(ctx.payload_meta->length)
                                          : ctx.payload_meta->content_hash);
    }
    // env-only roots (domain/files/tools) never resolve over a ctx
    return out;
}

bool domain_matches(const std::string& domain, const std::string& entry) {
    if (domain == entry) return true;
    return domain.size() > entry.size() + 1 &&
           domain.compare(domain.size() - entry.size() - 1, entry.size() + 1, "." + entry) == 0;
}

}  // namespace

RiskCategory category_of_hard_primitive(PrimitiveType t) {
    switch (t) {
        case PrimitiveType::file_write:
        case PrimitiveType::file_delete:
            return RiskCategory::write_delete;
        case PrimitiveType::proc_spawn:
            return RiskCategory::proc_spawn;
        case PrimitiveType::net_send:
            return RiskCategory::net_send;
        case PrimitiveType::file_read:
        case PrimitiveType::browse_nav:
            return RiskCategory::sensitive_read;
        default:
            return RiskCategory::none;
    }
}

namespace {

bool motif_matches(const std::vector<MotifStep>& steps, const StructuredContext& ctx) {
    if (steps.empty()) return false;
    // Candidate chain: history records in order, current ctx as the final step.
    struct Item {
        RiskCategory category;
        std::string resource;
    };
    std::vector<Item> history;
    for (const auto& h : ctx.recent_hard_history)
        history.push_back({category_of_hard_primitive(h.type), h.resource});
    const Item current{category_of_hard_primitive(ctx.primitive),
                       primary_resource(ctx.primitive, ctx.canonical_args)};

    const MotifStep& last = steps.back();
    if (last.category != current.category) return false;

    // Try every strictly increasing assignment of the first k-1 steps to
    // history; H is small so recursion is fine.
    const std::size_t k = steps.size() - 1;
    std::string artifact;
    if (last.same_artifact) {
        if (current.resource.empty()) return false;
        artifact = current.resource;
    }
    std::function<bool(std::size_t, std::size_t, std::string)> match =
        [&](std::size_t step_i, std::size_t hist_i, std::string art) -> bool {
        if (step_i == k) {
            if (last.same_artifact && !art.empty() && art != current.resource) return false;
            return true;
        }
        for (std::size_t j = hist_i; j < history.size(); ++j) {
            const auto& item = history[j];
            if (item.category != steps[step_i].category) continue;
            std::string next_art = art;
            if (steps[step_i].same_artifact) {
                if (item.resource.empty()) continue;
                if (next_art.empty())
                    next_art = item.resource;
                else if (next_art != item.resource)
                    continue;
            }
            if (match(step_i + 1, j + 1, next_art)) return true;
        }
        return false;
    };
    return match(0, 0, last.same_artifact ? artifact : std::string());
}

}  // namespace

EvalOutcome eval_expr(const GateExpr& e, const StructuredContext& ctx, const EvalEnv& env) {
    EvalOutcome out;
    switch (e.kind) {
        case ExprKind::field_equals: {
            const FieldValue v = resolve_ctx_field(ctx, e.field);
            if (!v.error.empty()) {
                out.error = v.error;
                return out;
            }
            out.value = v.present && v.value == e.literal;
            return out;
        }
        case ExprKind::path_under_roots: {
            const FieldValue v = resolve_ctx_field(ctx, e.field);
            if (!v.error.empty()) {
                out.error = v.error;
                return out;
            }
            out.value = false;
            if (v.present) {
                for (const auto& root : ctx.workspace_roots)
                    if (path_has_root(v.value, root)) {
                        out.value = true;
                        break;
                    }
            }
            return out;
        }
        case ExprKind::path_matches: {
            const FieldValue v = resolve_ctx_field(ctx, e.field);
            if (!v.error.empty()) {
                out.error = v.error;
                return out;
            }
            out.value = v.present && glob_match(e.literal, v.value);
            return out;
        }
        case ExprKind::domain_in: {
            if (!ctx.net_dest) return out;  // false
            if (!env.allowlists) {
                out.error = "no allowlists configured for (domain-in " + e.literal + ")";
                return out;
            }
            const auto it = env.allowlists->find(e.literal);
            if (it == env.allowlists->end()) {
                out.error = "unknown allowlist: " + e.literal;
                return out;
            }
            for (const auto& entry : it->second)
                if (domain_matches(ctx.net_dest->domain, entry)) {
                    out.value = true;
                    break;
                }
            return out;
        }
        case ExprKind::port_in: {
            if (!ctx.net_dest) return out;
            out.value = std::find(e.ports.begin(), e.ports.end(), ctx.net_dest->port) !=
                        e.ports.end();
            return out;
        }
        case ExprKind::motif:
            out.value = motif_matches(e.steps, ctx);
            return out;
        case ExprKind::payload_flag: {
            if (!env.classifier) {
                out.error = "no payload classifier configured";
                return out;
            }
            const auto labels = env.classifier->labels(ctx);
            out.value = std::find(labels.begin(), labels.end(), e.literal) != labels.end();
            return out;
        }
        case ExprKind::and_: {
            out.value = true;
            for (const auto& c : e.children) {
                const EvalOutcome r = eval_expr(c, ctx, env);
                if (!r.ok()) return r;
                if (!r.value) {
                    out.value = false;
                    return out;
                }
            }
            return out;
        }
        case ExprKind::or_: {
            out.value = false;
            for (const auto& c : e.children) {
                const EvalOutcome r = eval_expr(c, ctx, env);
                if (!r.ok()) return r;
                if (r.value) {
                    out.value = true;
                    return out;
                }
            }
            return out;
        }
        case ExprKind::not_: {
            const EvalOutcome r = eval_expr(e.children.front(), ctx, env);
            if (!r.ok()) return r;
            out.value = !r.value;
            return out;
        }
    }
    out.error = "unknown expression kind";
    return out;
}

EvalOutcome eval_env_expr(const GateExpr& e, const EnvSummary& env) {
    EvalOutcome out;
    switch (e.kind) {
        case ExprKind::field_equals: {
            const auto parts = split(e.field, '.');
            if (parts.front() == "domain") {
                out.value = env.domain == e.literal;
            } else if (parts.front() == "tools" && parts.size() == 2) {
                const bool has = std::find(env.tools.begin(), env.tools.end(), parts[1]) !=
                                 env.tools.end();
                out.value = (e.literal == "1") == has && (e.literal == "1" || e.literal == "0");
            } else {
                out.value = false;
            }
            return out;
        }
        case ExprKind::path_matches: {
            if (e.field != "files") return out;
            for (const auto& f : env.files)
                if (glob_match(e.literal, f)) {
                    out.value = true;
                    break;
                }
            return out;
        }
        case ExprKind::and_: {
            out.value = true;
            for (const auto& c : e.children) {
                const EvalOutcome r = eval_env_expr(c, env);
                if (!r.ok()) return r;
                if (!r.value) {
                    out.value = false;
                    return out;
                }
            }
            return out;
        }
        case ExprKind::or_: {
            for (const auto& c : e.children) {
                const EvalOutcome r = eval_env_expr(c, env);
                if (!r.ok()) return r;
                if (r.value) {
                    out.value = true;
                    return out;
                }
            }
            return out;
        }
        case ExprKind::not_: {
            const EvalOutcome r = eval_env_expr(e.children.front(), env);
            if (!r.ok()) return r;
            out.value = !r.value;
            return out;
        }
        case ExprKind::payload_flag: {
            out.error = "payload leaves are not valid in preconditions";
            return out;
        }
        default:
            // remaining leaves have no meaning over an env summary
            return out;
    }
}

namespace {

std::string render_message(const std::string& tmpl, const Gate& g, const StructuredContext& ctx) {
    std::string out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] != '{') {
            out.push_back(tmpl[i]);
            continue;
        }
        const auto close = tmpl.find('}', i);
        if (close == std::string::npos) {
            out.append(tmpl.substr(i));
            break;
        }
        const std::string key = tmpl.substr(i + 1, close - i - 1);
        i = close;
        if (key == "primitive")
            out += to_string(ctx.primitive);
        else if (key == "resource")
            out += primary_resource(ctx.primitive, ctx.canonical_args);
        else if (key == "domain")
            out += ctx.net_dest ? ctx.net_dest->domain : "";
        else if (key == "cwd")
            out += ctx.cwd;
        else if (key == "gate")
            out += g.id;
        else {
            const auto it = ctx.canonical_args.find(key);
            if (it != ctx.canonical_args.end()) out += it->second;
        }
    }
    return out;
}

}  // namespace

GateVerdict eval_gate(const Gate& g, const StructuredContext& ctx, const EvalEnv& env) {
    const EvalOutcome r = eval_expr(g.expr, ctx, env);
    if (!r.ok()) {
        // fail closed
        return {false, "gate " + g.id + " evaluation error: " + r.error};
    }
    if (r.value) {
        std::string msg = render_message(g.message_template, g, ctx);
        if (msg.empty()) msg = "blocked by gate " + g.id;
        return {false, msg};
    }
    return {true, ""};
}

Json gate_to_json(const Gate& g) {
    Json scope;
    if (g.scope == GateScope::global)
        scope = Json{{"type", "global"}};
    else
        scope = Json{{"type", "node_local"}, {"node_id", g.node_id}};
    return Json{{"id", g.id},
                {"scope", scope},
                {"kind", g.kind == GateKind::rule ? "rule" : "content"},
                {"expr", print_expr(g.expr)},
                {"message_template", g.message_template},
                {"corpus_refs", g.corpus_refs}};
}

Gate gate_from_json(const Json& j) {
    Gate g;
    g.id = j.at("id").get<std::string>();
    const auto& scope = j.at("scope");
    if (scope.at("type").get<std::string>() == "global") {
        g.scope = GateScope::global;
    } else {
        g.scope = GateScope::node_local;
        g.node_id = scope.at("node_id").get<int>();
    }
    g.kind = j.at("kind").get<std::string>() == "content" ? GateKind::content : GateKind::rule;
    g.expr = parse_expr(j.at("expr").get<std::string>());
    g.message_template = j.at("message_template").get<std::string>();
    g.corpus_refs = j.at("corpus_refs").get<std::vector<std::string>>();
    return g;
}

void GateLibrary::add_gate(Gate g) {
    validate_expr(g.expr);
    if (find(g.id)) throw SchemaError("duplicate gate id: " + g.id);
    gates.push_back(std::move(g));
    std::sort(gates.begin(), gates.end(),
              [](const Gate& a, const Gate& b) { return a.id < b.id; });
}

const Gate* GateLibrary::find(const std::string& id) const {
    for (const auto& g : gates)
        if (g.id == id) return &g;
    return nullptr;
}

Gate* GateLibrary::find(const std::string& id) {
    for (auto& g : gates)
        if (g.id == id) return &g;
    return nullptr;
}

std::vector<const Gate*> GateLibrary::global_gates() const {
    std::vector<const Gate*> out;
    for (const auto& g : gates)
        if (g.scope == GateScope::global) out.push_back(&g);
    return out;
}

std::string GateLibrary::safety_hash() const {
    std::uint64_t h = fnv1a64("gate-library");
    for (const auto& g : gates) {
        h = fnv1a64(g.id, h);
        h = fnv1a64(print_expr(g.expr), h);
    }
    for (const auto& [name, entries] : allowlists) {
        h = fnv1a64(name, h);
        for (const auto& e : entries) h = fnv1a64(e, h);
    }
    return to_hex(h);
}

Json GateLibrary::to_json() const {
    Json arr = Json::array();
    for (const auto& g : gates) arr.push_back(gate_to_json(g));
    return Json{{"allowlists", allowlists}, {"gates", arr}};
}

GateLibrary GateLibrary::from_json(const Json& j) {
    GateLibrary lib;
    lib.allowlists =
        j.at("allowlists").get<std::map<std::string, std::vector<std::string>>>();
    for (const auto& g : j.at("gates")) lib.add_gate(gate_from_json(g));
    return lib;
}

GateDecision hard_gate_ok(const GateLibrary& lib, const StructuredContext& ctx,
                          const PayloadClassifier* classifier) {
    EvalEnv env{&lib.allowlists, classifier};
    GateDecision out;
    for (const Gate* g : lib.global_gates()) {
        const GateVerdict v = eval_gate(*g, ctx, env);
        if (!v.ok) {
            out.ok = false;
            out.first_failure = v;
            out.gate_id = g->id;
            return out;
        }
    }
    return out;
}

GateDecision node_gate_ok(const std::vector<Gate>& node_gates, const StructuredContext& ctx,
                          const EvalEnv& env) {
    GateDecision out;
    std::vector<const Gate*> ordered;
    for (const auto& g : node_gates) ordered.push_back(&g);
    std::sort(ordered.begin(), ordered.end(),
              [](const Gate* a, const Gate* b) { return a->id < b->id; });
    for (const Gate* g : ordered) {
        const GateVerdict v = eval_gate(*g, ctx, env);
        if (!v.ok) {
            out.ok = false;
            out.first_failure = v;
            out.gate_id = g->id;
            return out;
        }
    }
    return out;
}

UpdateCheck propose_update(const Gate& gate_old, const Gate& gate_new,
                           const std::vector<StructuredContext>& unsafe_corpus,
                           const std::vector<StructuredContext>& benign_corpus,
                           double eps_benign, const EvalEnv& env) {
    UpdateCheck out;
    for (const auto& ctx : unsafe_corpus) {
        const bool old_rejects = !eval_gate(gate_old, ctx, env).ok;
        if (!old_rejects) continue;
        const bool new_rejects = !eval_gate(gate_new, ctx, env).ok;
        if (!new_rejects) {
            out.reason = "monotonicity";
            out.witness = ctx.trajectory_id + ":" + std::to_string(ctx.event_index);
            return out;
        }
    }
    if (benign_corpus.empty()) {
        out.vacuous_benign = true;
    } else {
        std::size_t rejected = 0;
        for (const auto& ctx : benign_corpus)
            if (!eval_gate(gate_new, ctx, env).ok) ++rejected;
        out.benign_fp = static_cast<double>(rejected) / static_cast<double>(benign_corpus.size());
        if (out.benign_fp > eps_benign) {
            out.reason = "benign_fp " + std::to_string(out.benign_fp) + " > " +
                         std::to_string(eps_benign);
            return out;
        }
    }
    out.accepted = true;
    return out;
}

Json to_json(const EnvSummary& e) {
    return Json{{"files", e.files},
                {"domain", e.domain},
                {"tools", e.tools},
                {"risk_counts", e.risk_counts}};
}

EnvSummary env_summary_from_json(const Json& j) {
    EnvSummary e;
    e.files = j.at("files").get<std::vector<std::string>>();
    e.domain = j.at("domain").get<std::string>();
    e.tools = j.at("tools").get<std::vector<std::string>>();
    e.risk_counts = j.at("risk_counts").get<std::map<std::string, int>>();
    return e;
}

}  // namespace gbt
