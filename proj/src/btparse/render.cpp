#include <algorithm>
#include <fmt/format.h>
#include <sstream>

#include "nl2bpf/btparse.hpp"

namespace nl2bpf::ast {

std::string_view to_string(ProbeKind kind) {
    switch (kind) {
        case ProbeKind::Kprobe: return "kprobe";
        case ProbeKind::Kretprobe: return "kretprobe";
        case ProbeKind::Tracepoint: return "tracepoint";
        case ProbeKind::Uprobe: return "uprobe";
        case ProbeKind::Uretprobe: return "uretprobe";
    }
    return "kprobe";
}

std::optional<ProbeKind> probe_kind_from_string(std::string_view text) {
    if (text == "kprobe") return ProbeKind::Kprobe;
    if (text == "kretprobe") return ProbeKind::Kretprobe;
    if (text == "tracepoint") return ProbeKind::Tracepoint;
    if (text == "uprobe") return ProbeKind::Uprobe;
    if (text == "uretprobe") return ProbeKind::Uretprobe;
    return std::nullopt;
}

std::string to_string(const ProbeSpec& probe) {
    return std::string(to_string(probe.kind)) + ":" + probe.target;
}

std::string_view to_string(BinaryOp op) {
    switch (op) {
        case BinaryOp::Add: return "+";
        case BinaryOp::Sub: return "-";
        case BinaryOp::Mul: return "*";
        case BinaryOp::Div: return "/";
        case BinaryOp::Mod: return "%";
        case BinaryOp::BitAnd: return "&";
        case BinaryOp::BitOr: return "|";
        case BinaryOp::BitXor: return "^";
        case BinaryOp::Shl: return "<<";
        case BinaryOp::Shr: return ">>";
        case BinaryOp::Eq: return "==";
        case BinaryOp::Ne: return "!=";
        case BinaryOp::Lt: return "<";
        case BinaryOp::Le: return "<=";
        case BinaryOp::Gt: return ">";
        case BinaryOp::Ge: return ">=";
        case BinaryOp::LogicalAnd: return "&&";
        case BinaryOp::LogicalOr: return "||";
    }
    return "?";
}

std::string_view to_string(UnaryOp op) {
    switch (op) {
        case UnaryOp::LogicalNot: return "!";
        case UnaryOp::BitNot: return "~";
        case UnaryOp::Negate: return "-";
    }
    return "?";
}

}  // namespace nl2bpf::ast

namespace nl2bpf::btparse {

using namespace ast;

namespace {

int precedence(BinaryOp op) {
    switch (op) {
        case BinaryOp::LogicalOr: return 1;
        case BinaryOp::LogicalAnd: return 2;
        case BinaryOp::BitOr: return 3;
        case BinaryOp::BitXor: return 4;
        case BinaryOp::BitAnd: return 5;
        case BinaryOp::Eq:
        case BinaryOp::Ne: return 6;
        case BinaryOp::Lt:
        case BinaryOp::Le:
        case BinaryOp::Gt:
        case BinaryOp::Ge: return 7;
        case BinaryOp::Shl:
        case BinaryOp::Shr: return 8;
        case BinaryOp::Add:
        case BinaryOp::Sub: return 9;
        case BinaryOp::Mul:
        case BinaryOp::Div:
        case BinaryOp::Mod: return 10;
    }
    return 0;
}

std::string escape(const std::string& text) {
    std::string out = "\"";
    for (char c : text) {
        switch (c) {
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            case '\0': out += "\\0"; break;
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            default: out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

std::string render_expr(const Expr& e);

std::string render_list(const std::vector<Expr>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out += ", ";
        out += render_expr(items[i]);
    }
    return out;
}

bool is_atomic(const Expr& e) {
    return !std::holds_alternative<Binary>(e.node) && !std::holds_alternative<Unary>(e.node) &&
           !std::holds_alternative<Cast>(e.node);
}

std::string render_operand(const Expr& e, int parent_prec, bool right_side) {
    std::string text = render_expr(e);
    if (const auto* b = std::get_if<Binary>(&e.node)) {
        int prec = precedence(b->op);
        if (prec < parent_prec || (right_side && prec == parent_prec)) return "(" + text + ")";
    }
    return text;
}

std::string render_expr(const Expr& e) {
    return std::visit(
        [](const auto& n) -> std::string {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, IntLit>) {
                return n.hex ? fmt::format("0x{:x}", n.value) : std::to_string(n.value);
            } else if constexpr (std::is_same_v<T, StrLit>) {
                return escape(n.value);
            } else if constexpr (std::is_same_v<T, BuiltinVar>) {
                return n.name;
            } else if constexpr (std::is_same_v<T, ScratchVar>) {
                return "$" + n.name;
            } else if constexpr (std::is_same_v<T, MapAccess>) {
                std::string out = "@" + n.name;
                if (!n.keys.empty()) out += "[" + render_list(n.keys) + "]";
                return out;
            } else if constexpr (std::is_same_v<T, FieldChain>) {
                std::string out = render_expr(*n.base);
                if (!is_atomic(*n.base)) out = "(" + out + ")";
                for (const auto& f : n.fields) out += (f.arrow ? "->" : ".") + f.name;
                return out;
            } else if constexpr (std::is_same_v<T, Cast>) {
                std::string operand = render_expr(*n.operand);
                if (std::holds_alternative<Binary>(n.operand->node)) operand = "(" + operand + ")";
                return "(" + n.type_name + ")" + operand;
            } else if constexpr (std::is_same_v<T, Unary>) {
                std::string operand = render_expr(*n.operand);
                if (!is_atomic(*n.operand)) operand = "(" + operand + ")";
                return std::string(to_string(n.op)) + operand;
            } else if constexpr (std::is_same_v<T, Binary>) {
                int prec = precedence(n.op);
                return render_operand(*n.lhs, prec, false) + " " + std::string(to_string(n.op)) + " " +
                       render_operand(*n.rhs, prec, true);
            } else {
                return n.name + "(" + render_list(n.args) + ")";
            }
        },
        e.node);
}

void render_body(std::ostringstream& out, const std::vector<Stmt>& body, int depth);

void render_stmt(std::ostringstream& out, const Stmt& s, int depth) {
    const std::string indent(static_cast<std::size_t>(depth) * 4, ' ');
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Assign>) {
                out << indent << "$" << n.var << " = " << render_expr(n.value) << ";\n";
            } else if constexpr (std::is_same_v<T, MapAssign>) {
                out << indent << "@" << n.map;
                if (!n.keys.empty()) out << "[" << render_list(n.keys) << "]";
                out << " = " << render_expr(n.value) << ";\n";
            } else if constexpr (std::is_same_v<T, FieldAssign>) {
                out << indent << render_expr(n.target) << " = " << render_expr(n.value) << ";\n";
            } else if constexpr (std::is_same_v<T, Delete>) {
                out << indent << "delete(@" << n.map;
                if (!n.keys.empty()) out << "[" << render_list(n.keys) << "]";
                out << ");\n";
            } else if constexpr (std::is_same_v<T, Printf>) {
                out << indent << "printf(" << escape(n.format);
                for (const auto& a : n.args) out << ", " << render_expr(a);
                out << ");\n";
            } else if constexpr (std::is_same_v<T, ExprStmt>) {
                out << indent << render_expr(n.expr) << ";\n";
            } else if constexpr (std::is_same_v<T, If>) {
                out << indent << "if (" << render_expr(n.cond) << ") {\n";
                render_body(out, n.then_body, depth + 1);
                const If* cur = &n;
                for (;;) {
                    if (!cur->has_else) {
                        out << indent << "}\n";
                        break;
                    }
                    // `else { if ... }` and `else if ...` parse to the same tree.
                    if (cur->else_body.size() == 1 && std::holds_alternative<If>(cur->else_body[0].node)) {
                        cur = &std::get<If>(cur->else_body[0].node);
                        out << indent << "} else if (" << render_expr(cur->cond) << ") {\n";
                        render_body(out, cur->then_body, depth + 1);
                        continue;
                    }
                    out << indent << "} else {\n";
                    render_body(out, cur->else_body, depth + 1);
                    out << indent << "}\n";
                    break;
                }
            } else if constexpr (std::is_same_v<T, Unroll>) {
                out << indent << "unroll(" << n.count << ") {\n";
                render_body(out, n.body, depth + 1);
                out << indent << "}\n";
            } else if constexpr (std::is_same_v<T, Assume>) {
                out << indent << "assume(" << render_expr(n.cond) << ");\n";
            } else {
                out << indent << "assert(" << render_expr(n.cond) << ");\n";
            }
        },
        s.node);
}

void render_body(std::ostringstream& out, const std::vector<Stmt>& body, int depth) {
    for (const auto& s : body) render_stmt(out, s, depth);
}

void render_clause(std::ostringstream& out, const ProbeClause& c) {
    for (std::size_t i = 0; i < c.attach_points.size(); ++i) {
        if (i > 0) out << ", ";
        out << to_string(c.attach_points[i]);
    }
    if (c.predicate) {
        out << "\n/" << render_expr(*c.predicate) << "/\n{\n";
    } else {
        out << " {\n";
    }
    render_body(out, c.body, 1);
    out << "}\n";
}

void strip_body(std::vector<Stmt>& body) {
    std::erase_if(body, [](const Stmt& s) {
        return std::holds_alternative<Assume>(s.node) || std::holds_alternative<Assert>(s.node);
    });
    for (auto& s : body) {
        if (auto* n = std::get_if<If>(&s.node)) {
            strip_body(n->then_body);
            strip_body(n->else_body);
        } else if (auto* u = std::get_if<Unroll>(&s.node)) {
            strip_body(u->body);
        }
    }
}

std::size_t count_in(const std::vector<Stmt>& body) {
    std::size_t n = 0;
    for (const auto& s : body) {
        if (std::holds_alternative<Assume>(s.node) || std::holds_alternative<Assert>(s.node)) {
            ++n;
        } else if (const auto* i = std::get_if<If>(&s.node)) {
            n += count_in(i->then_body) + count_in(i->else_body);
        } else if (const auto* u = std::get_if<Unroll>(&s.node)) {
            n += count_in(u->body);
        }
    }
    return n;
}

}  // namespace

std::string render(const Expr& expr) { return render_expr(expr); }

std::string render(const Stmt& stmt) {
    std::ostringstream out;
    render_stmt(out, stmt, 0);
    std::string text = out.str();
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return text;
}

std::string render(const ProbeClause& clause) {
    std::ostringstream out;
    render_clause(out, clause);
    return out.str();
}

std::string render(const Program& program) {
    std::ostringstream out;
    for (std::size_t i = 0; i < program.clauses.size(); ++i) {
        if (i > 0) out << "\n";
        render_clause(out, program.clauses[i]);
    }
    return out.str();
}

std::vector<ProbeSpec> extract_probes(const Program& program) {
    std::vector<ProbeSpec> probes;
    for (const auto& clause : program.clauses) {
        probes.insert(probes.end(), clause.attach_points.begin(), clause.attach_points.end());
    }
    return probes;
}

Program strip_annotations(const Program& program) {
    Program out = program;
    for (auto& clause : out.clauses) strip_body(clause.body);
    return out;
}

std::size_t count_annotations(const Program& program) {
    std::size_t n = 0;
    for (const auto& clause : program.clauses) n += count_in(clause.body);
    return n;
}

bool has_annotations(const Program& program) { return count_annotations(program) > 0; }

}  // namespace nl2bpf::btparse
