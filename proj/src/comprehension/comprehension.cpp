#include <algorithm>
#include <functional>
#include <regex>
#include <set>

#include "nl2bpf/btparse.hpp"
#include "nl2bpf/comprehension.hpp"

namespace nl2bpf::comprehension {

using namespace nl2bpf::ast;
using contracts::ConditionEntry;
using contracts::Contract;
using contracts::ContractStore;

std::string_view to_string(Provenance p) { return p == Provenance::Contract ? "contract" : "prompt_inferred"; }

namespace {

bool is_builtin(const std::string& name) {
    static const std::set<std::string> fixed = {"tid", "pid", "comm", "retval", "args"};
    if (fixed.count(name)) return true;
    return name.size() == 4 && name.rfind("arg", 0) == 0 && std::isdigit(static_cast<unsigned char>(name[3]));
}

// Index of the first top-level assignment to $var, or npos.
std::size_t first_assignment(const ProbeClause& clause, const std::string& var) {
    for (std::size_t i = 0; i < clause.body.size(); ++i) {
        if (const auto* a = std::get_if<Assign>(&clause.body[i].node); a && a->var == var) return i;
    }
    return std::string::npos;
}

// Parameter names of a C prototype, in order.
std::vector<std::string> prototype_params(const std::string& prototype) {
    std::vector<std::string> out;
    const auto open = prototype.find('(');
    const auto close = prototype.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open) return out;
    const std::string params = prototype.substr(open + 1, close - open - 1);
    static const std::regex last_ident(R"(([A-Za-z_]\w*)\s*(\[[^\]]*\])?\s*$)");
    std::size_t start = 0;
    while (start <= params.size()) {
        auto comma = params.find(',', start);
        if (comma == std::string::npos) comma = params.size();
        std::smatch m;
        const std::string p = params.substr(start, comma - start);
        out.push_back(std::regex_search(p, m, last_ident) ? m[1].str() : "");
        start = comma + 1;
    }
    return out;
}

void collect_vars(const Expr& e, std::set<std::string>& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ScratchVar>) {
                out.insert(n.name);
            } else if constexpr (std::is_same_v<T, MapAccess>) {
                for (const auto& k : n.keys) collect_vars(k, out);
            } else if constexpr (std::is_same_v<T, FieldChain>) {
                collect_vars(*n.base, out);
            } else if constexpr (std::is_same_v<T, Cast> || std::is_same_v<T, Unary>) {
                collect_vars(*n.operand, out);
            } else if constexpr (std::is_same_v<T, Binary>) {
                collect_vars(*n.lhs, out);
                collect_vars(*n.rhs, out);
            } else if constexpr (std::is_same_v<T, Call>) {
                for (const auto& a : n.args) collect_vars(a, out);
            }
        },
        e.node);
}

bool is_return_probe(const ProbeClause& clause) {
    return std::all_of(clause.attach_points.begin(), clause.attach_points.end(), [](const ProbeSpec& p) {
        return p.kind == ProbeKind::Kretprobe || p.kind == ProbeKind::Uretprobe;
    });
}

Stmt make_stmt(bool is_assert, Expr cond) {
    Stmt s{Assume{}, {}};
    if (is_assert) s.node = Assert{std::move(cond)};
    else s.node = Assume{std::move(cond)};
    return s;
}

std::vector<const Contract*> dedupe(std::vector<const Contract*> in) {
    std::vector<const Contract*> out;
    for (const Contract* c : in) {
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
    return out;
}

}  // namespace

std::vector<const Contract*> clause_contracts(const ProbeClause& clause, const ContractStore& store) {
    std::vector<const Contract*> out;
    for (const auto& probe : clause.attach_points) {
        auto matches = contracts::lookup(store, probe);
        if (!matches.empty()) out.push_back(matches.front());
    }
    return dedupe(std::move(out));
}

std::vector<const Contract*> all_matches(const ProbeClause& clause, const ContractStore& store) {
    std::vector<const Contract*> out;
    for (const auto& probe : clause.attach_points) {
        auto matches = contracts::lookup(store, probe);
        out.insert(out.end(), matches.begin(), matches.end());
    }
    return dedupe(std::move(out));
}

std::optional<Expr> condition_expr(const ConditionEntry& entry, const ProbeClause& clause, const Contract& contract) {
    static const std::regex subject_re(R"(([A-Za-z_]\w*)(((->|\.)[A-Za-z_]\w*)*))");
    std::smatch m;
    if (!std::regex_match(entry.subject, m, subject_re)) return std::nullopt;
    const auto relation = contracts::parse_relation(entry.relation);
    if (!relation) return std::nullopt;

    const std::string base = m[1].str();
    const std::string rest = m[2].str();
    std::string subject;
    if (is_builtin(base)) {
        subject = entry.subject;
    } else if (first_assignment(clause, base) != std::string::npos) {
        subject = "$" + entry.subject;
    } else {
        const auto params = prototype_params(contract.prototype);
        const auto it = std::find(params.begin(), params.end(), base);
        if (it == params.end() || it - params.begin() > 9) return std::nullopt;
        subject = "arg" + std::to_string(it - params.begin()) + rest;
    }
    const std::string text = subject + " " + std::string(ast::to_string(relation->op)) + " " +
                             std::to_string(relation->value);
    try {
        return btparse::parse_expression(text);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

AnnotatedProgram direct_annotate(const Program& candidate, const ContractStore& store) {
    if (btparse::has_annotations(candidate)) throw AnnotationsPresent();
    Program out = candidate;
    for (ProbeClause& clause : out.clauses) {
        // (insertion index, statement) in contract order.
        std::vector<std::pair<std::size_t, Stmt>> assumes;
        std::vector<Stmt> asserts;
        for (const Contract* c : clause_contracts(clause, store)) {
            for (const ConditionEntry& e : c->pre) {
                auto cond = condition_expr(e, clause, *c);
                if (!cond) continue;
                std::set<std::string> vars;
                collect_vars(*cond, vars);
                std::size_t at = 0;
                for (const auto& v : vars) at = std::max(at, first_assignment(clause, v) + 1);
                assumes.emplace_back(at, make_stmt(false, std::move(*cond)));
            }
            if (!is_return_probe(clause)) continue;
            for (const ConditionEntry& e : c->post) {
                if (auto cond = condition_expr(e, clause, *c)) asserts.push_back(make_stmt(true, std::move(*cond)));
            }
        }
        std::vector<Stmt> body;
        for (std::size_t i = 0; i <= clause.body.size(); ++i) {
            for (auto& [at, s] : assumes) {
                if (at == i) body.push_back(std::move(s));
            }
            if (i < clause.body.size()) body.push_back(std::move(clause.body[i]));
        }
        for (auto& s : asserts) body.push_back(std::move(s));
        clause.body = std::move(body);
    }
    // Re-parse so every node carries a position in the rendered text.
    AnnotatedProgram result;
    result.text = btparse::render(out);
    result.program = btparse::parse(result.text);
    result.provenance = assign_provenance(result.program, store);
    return result;
}

std::vector<AnnotationTag> assign_provenance(const Program& program, const ContractStore& store) {
    std::vector<AnnotationTag> tags;
    for (std::size_t ci = 0; ci < program.clauses.size(); ++ci) {
        const ProbeClause& clause = program.clauses[ci];
        struct Candidate {
            const Contract* contract;
            ConditionEntry entry;
            bool is_post;
            Expr expr;
            bool used = false;
        };
        std::vector<Candidate> pool;
        const ProbeClause stripped = btparse::strip_annotations(Program{{clause}}).clauses[0];
        for (const Contract* c : all_matches(clause, store)) {
            for (const auto& e : c->pre) {
                if (auto x = condition_expr(e, stripped, *c)) pool.push_back({c, e, false, std::move(*x)});
            }
            for (const auto& e : c->post) {
                if (auto x = condition_expr(e, stripped, *c)) pool.push_back({c, e, true, std::move(*x)});
            }
        }
        std::function<void(const std::vector<Stmt>&)> walk = [&](const std::vector<Stmt>& body) {
            for (const Stmt& s : body) {
                const Expr* cond = nullptr;
                bool is_assert = false;
                if (const auto* a = std::get_if<Assume>(&s.node)) {
                    cond = &a->cond;
                } else if (const auto* a = std::get_if<Assert>(&s.node)) {
                    cond = &a->cond;
                    is_assert = true;
                } else if (const auto* i = std::get_if<If>(&s.node)) {
                    walk(i->then_body);
                    walk(i->else_body);
                } else if (const auto* u = std::get_if<Unroll>(&s.node)) {
                    walk(u->body);
                }
                if (!cond) continue;
                AnnotationTag tag;
                tag.clause = ci;
                tag.loc = s.loc;
                tag.is_assert = is_assert;
                tag.condition = btparse::render(*cond);
                for (Candidate& c : pool) {
                    if (c.used || c.is_post != is_assert || !(c.expr == *cond)) continue;
                    c.used = true;
                    tag.provenance = Provenance::Contract;
                    tag.contract_key = c.contract->probe_key;
                    tag.entry = c.entry;
                    break;
                }
                tags.push_back(std::move(tag));
            }
        };
        walk(clause.body);
    }
    return tags;
}

std::string default_comprehension_system_prompt() {
    return "You add verification annotations to bpftrace programs. Insert assume(<condition>); statements at the "
           "start of a probe clause for the preconditions that hold there, and assert(<condition>); statements "
           "before the end of the clause for the properties the user's request requires of the output. Use the "
           "kernel contracts given. Do not modify, reorder or remove existing statements. Reply with the complete "
           "annotated program in one ``` code fence.";
}

AnnotatedProgram annotate(const Program& candidate, const std::string& user_request, const ContractStore& store,
                          llm::Backend& llm, const AnnotateOptions& options) {
    nlohmann::json matched = nlohmann::json::object();
    for (const auto& clause : candidate.clauses) {
        for (const Contract* c : all_matches(clause, store)) {
            ContractStore one;
            one.entries.emplace(c->probe_key, *c);
            matched.update(one.to_json());
        }
    }
    std::string user = "Request:\n" + user_request + "\n\nCandidate program:\n```\n" + btparse::render(candidate) +
                       "```\n\nKernel contracts for the probes in this program:\n" +
                       (matched.empty() ? std::string("(none)") : contracts::dump_sorted(matched)) + "\n";
    if (options.example_store && options.k > 0) {
        const auto examples = options.example_store->query(user_request, options.k);
        for (std::size_t i = 0; i < examples.size(); ++i) {
            user += "\nAnnotated example " + std::to_string(i + 1) + "\nRequest:\n" + examples[i].prompt +
                    "\nAnnotated program:\n```\n" + examples[i].program +
                    (examples[i].program.empty() || examples[i].program.back() != '\n' ? "\n" : "") + "```\n";
        }
    }
    llm::ChatRequest req{options.system_prompt.empty() ? default_comprehension_system_prompt() : options.system_prompt,
                         user, options.temperature, options.model};

    const Program expected = btparse::strip_annotations(candidate);
    auto attempt = [&]() {
        const auto response = llm.complete(req);
        AnnotatedProgram result;
        try {
            result.text = llm::extract_code(response);
            result.program = btparse::parse(result.text);
        } catch (const std::exception& e) {
            throw AnnotationParseError(std::string("annotated program does not parse: ") + e.what());
        }
        if (!(btparse::strip_annotations(result.program) == expected)) {
            throw StructureViolated("annotated program changes the candidate's statements");
        }
        result.provenance = assign_provenance(result.program, store);
        return result;
    };
    try {
        return attempt();
    } catch (const AnnotationParseError&) {
    } catch (const StructureViolated&) {
    }
    return attempt();
}

}  // namespace nl2bpf::comprehension
