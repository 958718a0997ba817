#include "nl2bpf/symexec/symexec.hpp"

#include <fmt/format.h>

#include <fstream>
#include <stdexcept>

#include "nl2bpf/btparse.hpp"

namespace nl2bpf::symexec {

using namespace nl2bpf::ast;

namespace {

bool valid_width(unsigned w) { return w == 8 || w == 16 || w == 32 || w == 64 || w == 128; }

std::string last_component(const std::string& path) {
    const auto dot = path.find_last_of('.');
    return dot == std::string::npos ? path : path.substr(dot + 1);
}

FieldType parse_type_name(const std::string& text) {
    FieldType t;
    std::string digits;
    if (text.rfind("uint", 0) == 0) {
        t.is_signed = false;
        digits = text.substr(4);
    } else if (text.rfind("int", 0) == 0) {
        t.is_signed = true;
        digits = text.substr(3);
    } else if (text.rfind("u", 0) == 0 || text.rfind("s", 0) == 0) {
        t.is_signed = text[0] == 's';
        digits = text.substr(1);
    } else {
        throw std::invalid_argument("unknown type name '" + text + "'");
    }
    try {
        t.width = static_cast<unsigned>(std::stoul(digits));
    } catch (const std::exception&) {
        throw std::invalid_argument("unknown type name '" + text + "'");
    }
    return t;
}

std::string location_prefix(SourceLoc loc) { return fmt::format("line {}", loc.line); }

uint32_t fnv1a(std::string_view s) {
    uint32_t h = 2166136261u;
    for (unsigned char c : s) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

}  // namespace

// ---- KernelTypeMap ----------------------------------------------------------

KernelTypeMap KernelTypeMap::defaults() {
    KernelTypeMap m;
    m.set("__sk_common.skc_dport", {16, false});
    m.set("__sk_common.skc_num", {16, false});
    m.set("__sk_common.skc_rcv_saddr", {32, false});
    m.set("__sk_common.skc_daddr", {32, false});
    return m;
}

KernelTypeMap KernelTypeMap::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("kernel type map must be a JSON object");
    KernelTypeMap m;
    for (const auto& [path, value] : j.items()) {
        FieldType t;
        if (value.is_string()) {
            t = parse_type_name(value.get<std::string>());
        } else if (value.is_object()) {
            t.width = value.at("width").get<unsigned>();
            t.is_signed = value.value("signed", false);
        } else {
            throw std::invalid_argument("bad type entry for '" + path + "'");
        }
        m.set(path, t);
    }
    return m;
}

KernelTypeMap KernelTypeMap::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open kernel type map '" + path + "'");
    return from_json(nlohmann::json::parse(in));
}

nlohmann::json KernelTypeMap::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [path, t] : entries_) {
        j[path] = (t.is_signed ? "int" : "uint") + std::to_string(t.width);
    }
    return j;
}

void KernelTypeMap::set(const std::string& path, FieldType type) {
    if (!valid_width(type.width)) {
        throw std::invalid_argument(fmt::format("invalid width {} for '{}'", type.width, path));
    }
    entries_[path] = type;
}

FieldType KernelTypeMap::lookup(const std::string& path) const {
    if (auto it = entries_.find(path); it != entries_.end()) return it->second;
    const std::string last = last_component(path);
    if (auto it = entries_.find(last); it != entries_.end()) return it->second;
    for (const auto& [key, t] : entries_) {
        if (last_component(key) == last) return t;
    }
    return {};
}

// ---- values -----------------------------------------------------------------

SymValue::Kind SymValue::kind() const {
    switch (term->kind) {
        case TermKind::Const: return Kind::Concrete;
        case TermKind::Symbol: return Kind::Symbolic;
        case TermKind::Apply: return Kind::Uninterpreted;
        case TermKind::Op: break;
    }
    return Kind::Op;
}

UnsupportedExpr::UnsupportedExpr(SourceLoc loc, const std::string& what)
    : std::runtime_error(fmt::format("{}:{}: {}", loc.line, loc.column, what)), loc_(loc) {}

namespace {

class Evaluator {
public:
    Evaluator(TermFactory& f, SymState& state, const KernelTypeMap& types) : f_(f), state_(state), types_(types) {}

    SymValue eval(const Expr& e) {
        return std::visit([&](const auto& n) { return eval_node(n, e.loc); }, e.node);
    }

    // Integer view of a value: Booleans become int64 0/1.
    SymValue bv(SymValue v) {
        if (v.term->is_bool()) return {f_.ite(v.term, f_.constant(1, 64), f_.constant(0, 64)), true};
        return v;
    }

    TermRef cond(SymValue v) {
        if (v.term->is_bool()) return v.term;
        return f_.bool_not(f_.eq(v.term, f_.constant(0, v.width())));
    }

private:
    TermRef resize(const SymValue& v, unsigned width) {
        if (v.width() == width) return v.term;
        if (v.width() > width) return f_.make(Op::Extract, {v.term}, width);
        return f_.make(v.is_signed ? Op::SignExt : Op::ZeroExt, {v.term}, width);
    }

    TermRef to64(const SymValue& v) { return resize(bv(v), 64); }

    SymValue eval_node(const IntLit& n, SourceLoc) {
        return {f_.constant(n.value, 64), true};
    }

    SymValue eval_node(const StrLit& n, SourceLoc) {
        return {f_.symbol(fmt::format("strlit_{:08x}", fnv1a(n.value)), 64), false};
    }

    SymValue eval_node(const BuiltinVar& n, SourceLoc) {
        if (n.name.rfind("args.", 0) == 0) {
            const FieldType t = types_.lookup(n.name);
            return {f_.symbol(n.name, t.width), t.is_signed};
        }
        if (n.name == "retval") return {f_.symbol(n.name, 64), true};
        return {f_.symbol(n.name, 64), false};
    }

    SymValue eval_node(const ScratchVar& n, SourceLoc) {
        if (auto it = state_.env.find(n.name); it != state_.env.end()) return it->second;
        SymValue fresh{f_.symbol("$" + n.name, 64), false};
        state_.env[n.name] = fresh;
        return fresh;
    }

    SymValue eval_node(const MapAccess& n, SourceLoc) {
        std::vector<TermRef> keys;
        for (const auto& k : n.keys) keys.push_back(to64(eval(k)));
        TermRef out = f_.apply("@" + n.name, keys, 64);
        if (auto it = state_.maps.find(n.name); it != state_.maps.end()) {
            for (const MapWrite& w : it->second) {
                TermRef same = f_.boolean(w.keys.size() == keys.size());
                for (std::size_t i = 0; i < keys.size() && i < w.keys.size(); ++i) {
                    same = f_.bool_and(same, f_.eq(w.keys[i], keys[i]));
                }
                out = f_.ite(same, w.value ? w.value : f_.constant(0, 64), out);
            }
        }
        return {out, true};
    }

    // Splits a chain into dereference segments: each "->" starts a new one.
    static std::vector<std::string> segments(const FieldChain& n) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < n.fields.size(); ++i) {
            if (i == 0 || n.fields[i].arrow) {
                out.push_back(n.fields[i].name);
            } else {
                out.back() += "." + n.fields[i].name;
            }
        }
        return out;
    }

    SymValue eval_node(const FieldChain& n, SourceLoc) {
        SymValue base = eval(*n.base);
        for (const std::string& path : segments(n)) {
            const FieldType t = types_.lookup(path);
            TermRef pointer = to64(base);
            TermRef value;
            if (pointer->kind == TermKind::Symbol || pointer->kind == TermKind::Const) {
                const std::string base_name =
                    pointer->kind == TermKind::Symbol ? pointer->name : to_hex(pointer->value, 64);
                const std::string name = base_name + "->" + path;
                value = f_.symbol(name, t.width);
                state_.field_model[name] = value;
            } else {
                value = f_.apply("->" + path, {pointer}, t.width);
            }
            base = {value, t.is_signed};
        }
        return base;
    }

    SymValue eval_node(const Cast& n, SourceLoc loc) {
        SymValue v = bv(eval(*n.operand));
        if (n.type_name.rfind("struct", 0) == 0 || n.type_name.find('*') != std::string::npos) {
            return {resize(v, 64), false};
        }
        FieldType t;
        try {
            t = parse_type_name(n.type_name);
        } catch (const std::invalid_argument&) {
            throw UnsupportedExpr(loc, "unsupported cast to '" + n.type_name + "'");
        }
        return {resize(v, t.width), t.is_signed};
    }

    SymValue eval_node(const Unary& n, SourceLoc) {
        SymValue v = eval(*n.operand);
        switch (n.op) {
            case UnaryOp::LogicalNot: return {f_.bool_not(cond(v)), true};
            case UnaryOp::BitNot: v = bv(v); return {f_.make(Op::Not, {v.term}), v.is_signed};
            case UnaryOp::Negate: v = bv(v); return {f_.make(Op::Neg, {v.term}), v.is_signed};
        }
        return v;
    }

    TermRef guard() {
        return f_.conjunction(state_.guards);
    }

    SymValue eval_node(const Binary& n, SourceLoc loc) {
        if (n.op == BinaryOp::LogicalAnd || n.op == BinaryOp::LogicalOr) {
            TermRef lhs = cond(eval(*n.lhs));
            state_.guards.push_back(n.op == BinaryOp::LogicalAnd ? lhs : f_.bool_not(lhs));
            TermRef rhs = cond(eval(*n.rhs));
            state_.guards.pop_back();
            return {n.op == BinaryOp::LogicalAnd ? f_.bool_and(lhs, rhs) : f_.bool_or(lhs, rhs), true};
        }
        const SymValue l = bv(eval(*n.lhs));
        const SymValue r = bv(eval(*n.rhs));
        const unsigned w = std::max(l.width(), r.width());
        const bool sgn = l.width() == r.width() ? (l.is_signed && r.is_signed)
                                                : (l.width() > r.width() ? l.is_signed : r.is_signed);
        TermRef a = resize(l, w);
        TermRef b = resize(r, w);
        auto arith = [&](Op op) { return SymValue{f_.make(op, {a, b}), sgn}; };
        auto pred = [&](TermRef t) { return SymValue{t, true}; };
        switch (n.op) {
            case BinaryOp::Add: return arith(Op::Add);
            case BinaryOp::Sub: return arith(Op::Sub);
            case BinaryOp::Mul: return arith(Op::Mul);
            case BinaryOp::BitAnd: return arith(Op::And);
            case BinaryOp::BitOr: return arith(Op::Or);
            case BinaryOp::BitXor: return arith(Op::Xor);
            case BinaryOp::Shl: return arith(Op::Shl);
            case BinaryOp::Shr: return arith(sgn ? Op::AShr : Op::LShr);
            case BinaryOp::Div:
            case BinaryOp::Mod: {
                if (!(b->is_const() && b->value != 0)) {
                    TermRef nonzero = f_.bool_not(f_.eq(b, f_.constant(0, w)));
                    state_.pending_goals.push_back(
                        {f_.bool_or(f_.bool_not(guard()), nonzero), loc,
                         fmt::format("{} by zero possible: {}", n.op == BinaryOp::Div ? "division" : "modulo",
                                     btparse::render(Expr{ExprNode{Binary{n}}, loc}))});
                }
                if (n.op == BinaryOp::Div) return arith(sgn ? Op::SDiv : Op::UDiv);
                return arith(sgn ? Op::SRem : Op::URem);
            }
            case BinaryOp::Eq: return pred(f_.eq(a, b));
            case BinaryOp::Ne: return pred(f_.bool_not(f_.eq(a, b)));
            case BinaryOp::Lt: return pred(f_.make(sgn ? Op::Slt : Op::Ult, {a, b}));
            case BinaryOp::Le: return pred(f_.make(sgn ? Op::Sle : Op::Ule, {a, b}));
            case BinaryOp::Gt: return pred(f_.make(sgn ? Op::Slt : Op::Ult, {b, a}));
            case BinaryOp::Ge: return pred(f_.make(sgn ? Op::Sle : Op::Ule, {b, a}));
            default: break;
        }
        throw UnsupportedExpr(loc, "unsupported operator");
    }

    SymValue eval_node(const Call& n, SourceLoc loc) {
        if (n.name == "bswap") {
            if (n.args.size() != 1) throw UnsupportedExpr(loc, "bswap takes one argument");
            SymValue v = bv(eval(n.args[0]));
            if (v.width() <= 8) return v;
            return {f_.make(Op::Bswap, {v.term}), v.is_signed};
        }
        if (n.name == "sizeof") {
            if (n.args.size() != 1) throw UnsupportedExpr(loc, "sizeof takes one argument");
            unsigned bits;
            if (const auto* chain = std::get_if<FieldChain>(&n.args[0].node)) {
                bits = types_.lookup(segments(*chain).back()).width;
            } else {
                bits = bv(eval(n.args[0])).width();
            }
            return {f_.constant(bits / 8, 64), true};
        }
        if (n.name == "time") return {f_.apply("time", {}, 64), false};
        if (n.name == "ntop" || n.name == "str") {
            if (n.args.empty()) throw UnsupportedExpr(loc, n.name + " needs an argument");
            std::vector<TermRef> args;
            for (const auto& a : n.args) args.push_back(to64(eval(a)));
            return {f_.apply(n.name, args, 64), false};
        }
        throw UnsupportedExpr(loc, "unsupported function '" + n.name + "'");
    }

    TermFactory& f_;
    SymState& state_;
    const KernelTypeMap& types_;
};

// ---- path exploration --------------------------------------------------------

struct Frame {
    const std::vector<Stmt>* body;
    std::size_t index = 0;
    uint64_t remaining = 0;  // extra iterations left (Unroll)
};

struct Path {
    SymState state;
    std::vector<Frame> frames;
};

class Executor {
public:
    Executor(const KernelTypeMap& types, const VerifyOptions& options, Solver& solver)
        : types_(types), options_(options), solver_(solver), start_(std::chrono::steady_clock::now()),
          deadline_(start_ + options.budget) {}

    Verdict run(const Program& program) {
        try {
            for (const ProbeClause& clause : program.clauses) {
                if (auto v = run_clause(clause)) return *v;
            }
        } catch (const UnsupportedExpr& e) {
            return SolverError{std::string("unsupported expression at ") + e.what()};
        } catch (const std::exception& e) {
            return SolverError{e.what()};
        }
        return Verified{};
    }

private:
    using Outcome = std::optional<Verdict>;

    std::chrono::milliseconds elapsed() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_);
    }

    Outcome run_clause(const ProbeClause& clause) {
        Path initial;
        initial.frames.push_back({&clause.body, 0, 0});
        if (clause.predicate) {
            Evaluator ev(factory_, initial.state, types_);
            TermRef c = ev.cond(ev.eval(*clause.predicate));
            if (auto v = check_pending(initial.state)) return v;
            initial.state.path.push_back(c);
        }
        std::vector<Path> pending;
        pending.push_back(std::move(initial));
        std::size_t paths = 1;
        while (!pending.empty()) {
            Path p = std::move(pending.back());
            pending.pop_back();
            if (auto v = run_path(p, pending, paths)) return v;
        }
        return std::nullopt;
    }

    Outcome run_path(Path& p, std::vector<Path>& pending, std::size_t& paths) {
        Evaluator ev(factory_, p.state, types_);
        while (!p.frames.empty()) {
            Frame& top = p.frames.back();
            if (top.index >= top.body->size()) {
                if (top.remaining > 0) {
                    --top.remaining;
                    top.index = 0;
                } else {
                    p.frames.pop_back();
                }
                continue;
            }
            const Stmt& s = (*top.body)[top.index++];
            Outcome out;
            bool dead = false;
            std::visit(
                [&](const auto& n) {
                    using T = std::decay_t<decltype(n)>;
                    SymState& st = p.state;
                    if constexpr (std::is_same_v<T, Assign>) {
                        SymValue v = ev.eval(n.value);
                        if ((out = check_pending(st))) return;
                        st.env[n.var] = v;
                    } else if constexpr (std::is_same_v<T, MapAssign>) {
                        MapWrite w;
                        for (const auto& k : n.keys) w.keys.push_back(widen64(ev, ev.eval(k)));
                        w.value = widen64(ev, ev.eval(n.value));
                        if ((out = check_pending(st))) return;
                        st.maps[n.map].push_back(std::move(w));
                    } else if constexpr (std::is_same_v<T, Delete>) {
                        MapWrite w;
                        for (const auto& k : n.keys) w.keys.push_back(widen64(ev, ev.eval(k)));
                        if ((out = check_pending(st))) return;
                        st.maps[n.map].push_back(std::move(w));
                    } else if constexpr (std::is_same_v<T, FieldAssign>) {
                        ev.eval(n.value);
                        out = check_pending(st);
                    } else if constexpr (std::is_same_v<T, Printf>) {
                        for (const auto& a : n.args) ev.eval(a);
                        out = check_pending(st);
                    } else if constexpr (std::is_same_v<T, ExprStmt>) {
                        ev.eval(n.expr);
                        out = check_pending(st);
                    } else if constexpr (std::is_same_v<T, Assume>) {
                        TermRef c = ev.cond(ev.eval(n.cond));
                        if ((out = check_pending(st))) return;
                        st.assumptions.push_back(c);
                        dead = c->is_const() && c->value == 0;
                    } else if constexpr (std::is_same_v<T, Assert>) {
                        TermRef c = ev.cond(ev.eval(n.cond));
                        if ((out = check_pending(st))) return;
                        out = check_goal(st, c, s.loc,
                                         fmt::format("{}: assert({}) can fail", location_prefix(s.loc),
                                                     btparse::render(n.cond)));
                    } else if constexpr (std::is_same_v<T, If>) {
                        TermRef c = ev.cond(ev.eval(n.cond));
                        if ((out = check_pending(st))) return;
                        if (c->is_const()) {
                            p.frames.push_back({c->value ? &n.then_body : &n.else_body, 0, 0});
                            return;
                        }
                        if (++paths > options_.fork_cap) {
                            out = Timeout{elapsed(), fmt::format("path limit of {} exceeded at {}", options_.fork_cap,
                                                                 location_prefix(s.loc))};
                            return;
                        }
                        Path other = p;
                        other.state.path.push_back(factory_.bool_not(c));
                        other.frames.push_back({&n.else_body, 0, 0});
                        pending.push_back(std::move(other));
                        st.path.push_back(c);
                        p.frames.push_back({&n.then_body, 0, 0});
                    } else if constexpr (std::is_same_v<T, Unroll>) {
                        if (n.count > 0) p.frames.push_back({&n.body, 0, n.count - 1});
                    }
                },
                s.node);
            if (out) return out;
            if (dead) return std::nullopt;
        }
        return std::nullopt;
    }

    TermRef widen64(Evaluator& ev, SymValue v) {
        v = ev.bv(v);
        if (v.width() == 64) return v.term;
        if (v.width() > 64) return factory_.make(Op::Extract, {v.term}, 64);
        return factory_.make(v.is_signed ? Op::SignExt : Op::ZeroExt, {v.term}, 64);
    }

    Outcome check_pending(SymState& st) {
        std::vector<ImplicitGoal> goals;
        goals.swap(st.pending_goals);
        for (const ImplicitGoal& g : goals) {
            if (auto v = check_goal(st, g.holds, g.loc, location_prefix(g.loc) + ": " + g.description)) return v;
        }
        return std::nullopt;
    }

    Outcome check_goal(const SymState& st, TermRef goal, SourceLoc loc, const std::string& what) {
        if (goal->is_const() && goal->value != 0) return std::nullopt;
        std::vector<TermRef> constraints(st.path.begin(), st.path.end());
        constraints.insert(constraints.end(), st.assumptions.begin(), st.assumptions.end());
        constraints.push_back(factory_.bool_not(goal));
        for (TermRef c : constraints) {
            if (c->is_const() && c->value == 0) return std::nullopt;
        }
        if (std::chrono::steady_clock::now() >= deadline_) {
            return Timeout{elapsed(), "verification budget exhausted"};
        }
        SolveOutcome result = solver_.check(factory_, constraints, deadline_);
        if (result.result == SatResult::Unsat) return std::nullopt;
        if (result.result == SatResult::Unknown) {
            if (std::chrono::steady_clock::now() >= deadline_) {
                return Timeout{elapsed(), "verification budget exhausted"};
            }
            return SolverError{result.message.empty() ? "solver returned unknown" : result.message};
        }
        for (TermRef c : constraints) {
            if (evaluate(c, result.model) != 1) {
                return SolverError{"solver model does not satisfy the query (" + solver_.name() + ")"};
            }
        }
        AssertViolation v;
        v.loc = loc;
        std::string shown;
        for (TermRef leaf : collect_leaves(constraints)) {
            if (leaf->kind != TermKind::Symbol) continue;
            CounterexampleValue value{leaf->width, result.model.get(leaf) & mask_of(leaf->width)};
            v.counterexample[leaf->name] = value;
        }
        for (const auto& [name, value] : v.counterexample) {
            shown += fmt::format("{}{} = {}", shown.empty() ? "" : ", ", name, to_hex(value.value, value.width));
        }
        v.message = what;
        if (!shown.empty()) v.message += "; counterexample: " + shown;
        return v;
    }

    TermFactory factory_;
    const KernelTypeMap& types_;
    const VerifyOptions& options_;
    Solver& solver_;
    std::chrono::steady_clock::time_point start_;
    Deadline deadline_;
};

}  // namespace

SymValue eval_expr(TermFactory& factory, SymState& state, const Expr& e, const KernelTypeMap& types) {
    Evaluator ev(factory, state, types);
    return ev.eval(e);
}

Verdict verify(const Program& program, const KernelTypeMap& types, const VerifyOptions& options) {
    BitBlastSolver fallback;
    Solver& solver = options.solver ? *options.solver : fallback;
    Executor ex(types, options, solver);
    return ex.run(program);
}

std::string describe(const Verdict& verdict) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Verified>) {
                return "verified";
            } else if constexpr (std::is_same_v<T, AssertViolation>) {
                return v.message;
            } else if constexpr (std::is_same_v<T, Timeout>) {
                return fmt::format("timeout after {} ms: {}", v.elapsed.count(), v.message);
            } else {
                return "solver error: " + v.message;
            }
        },
        verdict);
}

nlohmann::json to_json(const Verdict& verdict) {
    return std::visit(
        [](const auto& v) -> nlohmann::json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Verified>) {
                return {{"verdict", "verified"}};
            } else if constexpr (std::is_same_v<T, AssertViolation>) {
                nlohmann::json cex = nlohmann::json::object();
                for (const auto& [name, value] : v.counterexample) cex[name] = to_hex(value.value, value.width);
                return {{"verdict", "assert_violation"},
                        {"line", v.loc.line},
                        {"column", v.loc.column},
                        {"message", v.message},
                        {"counterexample", cex}};
            } else if constexpr (std::is_same_v<T, Timeout>) {
                return {{"verdict", "timeout"}, {"elapsed_ms", v.elapsed.count()}, {"message", v.message}};
            } else {
                return {{"verdict", "solver_error"}, {"message", v.message}};
            }
        },
        verdict);
}

}  // namespace nl2bpf::symexec
