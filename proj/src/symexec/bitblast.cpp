#include <map>
#include <stdexcept>
#include <unordered_map>

#include "nl2bpf/symexec/solver.hpp"

namespace nl2bpf::symexec {

namespace {

using Bits = std::vector<Lit>;

// Gate-level circuit builder on top of the SAT solver, with constant
// propagation and structural hashing of AND/XOR gates.
class Circuit {
public:
    explicit Circuit(SatSolver& sat) : sat_(sat) {
        const uint32_t v = sat_.new_var();
        true_ = make_lit(v);
        const Lit unit[] = {true_};
        sat_.add_clause(unit);
    }

    Lit t() const { return true_; }
    Lit f() const { return lit_not(true_); }
    Lit fresh() { return make_lit(sat_.new_var()); }
    bool is_const(Lit a) const { return lit_var(a) == lit_var(true_); }

    Lit land(Lit a, Lit b) {
        if (a == f() || b == f()) return f();
        if (a == t()) return b;
        if (b == t()) return a;
        if (a == b) return a;
        if (a == lit_not(b)) return f();
        if (a > b) std::swap(a, b);
        auto [it, inserted] = and_cache_.try_emplace({a, b}, 0);
        if (!inserted) return it->second;
        const Lit g = fresh();
        add({lit_not(g), a});
        add({lit_not(g), b});
        add({g, lit_not(a), lit_not(b)});
        it->second = g;
        return g;
    }

    Lit lor(Lit a, Lit b) { return lit_not(land(lit_not(a), lit_not(b))); }

    Lit lxor(Lit a, Lit b) {
        if (a == f()) return b;
        if (b == f()) return a;
        if (a == t()) return lit_not(b);
        if (b == t()) return lit_not(a);
        if (a == b) return f();
        if (a == lit_not(b)) return t();
        // Normalize polarity so x^y, !x^y, x^!y share one gate.
        bool flip = false;
        if (lit_negated(a)) {
            a = lit_not(a);
            flip = !flip;
        }
        if (lit_negated(b)) {
            b = lit_not(b);
            flip = !flip;
        }
        if (a > b) std::swap(a, b);
        auto [it, inserted] = xor_cache_.try_emplace({a, b}, 0);
        if (inserted) {
            const Lit g = fresh();
            add({lit_not(g), a, b});
            add({lit_not(g), lit_not(a), lit_not(b)});
            add({g, lit_not(a), b});
            add({g, a, lit_not(b)});
            it->second = g;
        }
        return flip ? lit_not(it->second) : it->second;
    }

    Lit mux(Lit c, Lit then_lit, Lit else_lit) {
        if (c == t()) return then_lit;
        if (c == f()) return else_lit;
        if (then_lit == else_lit) return then_lit;
        return lor(land(c, then_lit), land(lit_not(c), else_lit));
    }

    Lit all(const Bits& bits) {
        Lit out = t();
        for (Lit b : bits) out = land(out, b);
        return out;
    }

    Lit any(const Bits& bits) {
        Lit out = f();
        for (Lit b : bits) out = lor(out, b);
        return out;
    }

    Bits constant(BitValue v, unsigned width) {
        Bits out(width);
        for (unsigned i = 0; i < width; ++i) out[i] = ((v >> i) & 1) ? t() : f();
        return out;
    }

    Bits fresh_bits(unsigned width) {
        Bits out(width);
        for (auto& b : out) b = fresh();
        return out;
    }

    // Returns (sum, carry-out).
    std::pair<Bits, Lit> add_bits(const Bits& a, const Bits& b, Lit carry) {
        Bits sum(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            const Lit axb = lxor(a[i], b[i]);
            sum[i] = lxor(axb, carry);
            carry = lor(land(a[i], b[i]), land(carry, axb));
        }
        return {sum, carry};
    }

    Bits add(const Bits& a, const Bits& b) { return add_bits(a, b, f()).first; }

    Bits invert(const Bits& a) {
        Bits out(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = lit_not(a[i]);
        return out;
    }

    Bits sub(const Bits& a, const Bits& b) { return add_bits(a, invert(b), t()).first; }
    Bits neg(const Bits& a) { return sub(constant(0, static_cast<unsigned>(a.size())), a); }

    // a < b (unsigned): no carry out of a + ~b + 1.
    Lit ult(const Bits& a, const Bits& b) { return lit_not(add_bits(a, invert(b), t()).second); }

    Lit slt(Bits a, Bits b) {
        a.back() = lit_not(a.back());
        b.back() = lit_not(b.back());
        return ult(a, b);
    }

    Lit equal(const Bits& a, const Bits& b) {
        Lit out = t();
        for (std::size_t i = 0; i < a.size(); ++i) out = land(out, lit_not(lxor(a[i], b[i])));
        return out;
    }

    Bits select(Lit c, const Bits& a, const Bits& b) {
        Bits out(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = mux(c, a[i], b[i]);
        return out;
    }

    Bits mul(const Bits& a, const Bits& b) {
        const std::size_t w = a.size();
        Bits acc = constant(0, static_cast<unsigned>(w));
        for (std::size_t i = 0; i < w; ++i) {
            if (b[i] == f()) continue;
            Bits partial(w, f());
            for (std::size_t j = i; j < w; ++j) partial[j] = land(a[j - i], b[i]);
            acc = add(acc, partial);
        }
        return acc;
    }

    // Restoring division; divide-by-zero yields quotient all-ones and
    // remainder equal to the dividend (SMT-LIB semantics).
    std::pair<Bits, Bits> udivrem(const Bits& a, const Bits& b) {
        const std::size_t w = a.size();
        Bits rem(w + 1, f());
        Bits divisor(b);
        divisor.push_back(f());
        Bits quot(w, f());
        for (std::size_t step = w; step-- > 0;) {
            Bits shifted(w + 1);
            shifted[0] = a[step];
            for (std::size_t i = 1; i <= w; ++i) shifted[i] = rem[i - 1];
            auto [diff, carry] = add_bits(shifted, invert(divisor), t());
            quot[step] = carry;  // no borrow: shifted >= divisor
            rem = select(carry, diff, shifted);
        }
        rem.pop_back();
        return {quot, rem};
    }

    Bits shift(const Bits& a, const Bits& amount, Op op) {
        const std::size_t w = a.size();
        const Lit fill = op == Op::AShr ? a.back() : f();
        Bits cur = a;
        for (std::size_t k = 0; k < amount.size() && (std::size_t{1} << k) < w; ++k) {
            const std::size_t s = std::size_t{1} << k;
            Bits next(w);
            for (std::size_t i = 0; i < w; ++i) {
                Lit moved;
                if (op == Op::Shl) {
                    moved = i >= s ? cur[i - s] : f();
                } else {
                    moved = i + s < w ? cur[i + s] : fill;
                }
                next[i] = mux(amount[k], moved, cur[i]);
            }
            cur = std::move(next);
        }
        const Lit in_range = ult(amount, constant(w, static_cast<unsigned>(amount.size())));
        return select(in_range, cur, Bits(w, fill));
    }

    void add(std::initializer_list<Lit> lits) {
        sat_.add_clause(std::span<const Lit>(lits.begin(), lits.size()));
    }

private:
    SatSolver& sat_;
    Lit true_ = 0;
    std::map<std::pair<Lit, Lit>, Lit> and_cache_;
    std::map<std::pair<Lit, Lit>, Lit> xor_cache_;
};

class Blaster {
public:
    explicit Blaster(Circuit& c) : c_(c) {}

    Lit boolean(TermRef t) {
        const Bits& bits = blast(t);
        return bits[0];
    }

    // Booleans are encoded as a single bit.
    const Bits& blast(TermRef root) {
        TermRef roots[] = {root};
        for (TermRef t : topological_order(roots)) {
            if (cache_.contains(t)) continue;
            cache_.emplace(t, build(t));
        }
        return cache_.at(root);
    }

    const Bits* lookup(TermRef t) const {
        auto it = cache_.find(t);
        return it == cache_.end() ? nullptr : &it->second;
    }

private:
    Bits build(TermRef t) {
        const unsigned w = t->width;
        switch (t->kind) {
            case TermKind::Const:
                return w == 0 ? Bits{t->value ? c_.t() : c_.f()} : c_.constant(t->value, w);
            case TermKind::Symbol: return c_.fresh_bits(w == 0 ? 1 : w);
            case TermKind::Apply: throw std::logic_error("applications must be ackermannized before blasting");
            case TermKind::Op: break;
        }
        auto arg = [&](std::size_t i) -> const Bits& { return cache_.at(t->args[i]); };
        const unsigned param = static_cast<unsigned>(t->value);
        switch (t->op) {
            case Op::Add: return c_.add(arg(0), arg(1));
            case Op::Sub: return c_.sub(arg(0), arg(1));
            case Op::Mul: return c_.mul(arg(0), arg(1));
            case Op::UDiv: return c_.udivrem(arg(0), arg(1)).first;
            case Op::URem: return c_.udivrem(arg(0), arg(1)).second;
            case Op::SDiv:
            case Op::SRem: {
                const Bits& a = arg(0);
                const Bits& b = arg(1);
                const Lit na = a.back();
                const Lit nb = b.back();
                Bits abs_a = c_.select(na, c_.neg(a), a);
                Bits abs_b = c_.select(nb, c_.neg(b), b);
                auto [q, r] = c_.udivrem(abs_a, abs_b);
                if (t->op == Op::SDiv) return c_.select(c_.lxor(na, nb), c_.neg(q), q);
                return c_.select(na, c_.neg(r), r);
            }
            case Op::And:
            case Op::Or:
            case Op::Xor: {
                Bits out(w);
                for (unsigned i = 0; i < w; ++i) {
                    Lit x = arg(0)[i];
                    Lit y = arg(1)[i];
                    out[i] = t->op == Op::And ? c_.land(x, y) : t->op == Op::Or ? c_.lor(x, y) : c_.lxor(x, y);
                }
                return out;
            }
            case Op::Shl:
            case Op::LShr:
            case Op::AShr: return c_.shift(arg(0), arg(1), t->op);
            case Op::Not: return c_.invert(arg(0));
            case Op::Neg: return c_.neg(arg(0));
            case Op::ZeroExt: {
                Bits out = arg(0);
                out.resize(param, c_.f());
                return out;
            }
            case Op::SignExt: {
                Bits out = arg(0);
                const Lit sign = out.back();
                out.resize(param, sign);
                return out;
            }
            case Op::Extract: return Bits(arg(0).begin(), arg(0).begin() + param);
            case Op::Bswap: {
                const Bits& a = arg(0);
                Bits out(w);
                const unsigned bytes = w / 8;
                for (unsigned byte = 0; byte < bytes; ++byte) {
                    for (unsigned bit = 0; bit < 8; ++bit) out[8 * (bytes - 1 - byte) + bit] = a[8 * byte + bit];
                }
                return out;
            }
            case Op::Ite: return c_.select(arg(0)[0], arg(1), arg(2));
            case Op::Eq: return {c_.equal(arg(0), arg(1))};
            case Op::Ult: return {c_.ult(arg(0), arg(1))};
            case Op::Ule: return {lit_not(c_.ult(arg(1), arg(0)))};
            case Op::Slt: return {c_.slt(arg(0), arg(1))};
            case Op::Sle: return {lit_not(c_.slt(arg(1), arg(0)))};
            case Op::BoolAnd: return {c_.land(arg(0)[0], arg(1)[0])};
            case Op::BoolOr: return {c_.lor(arg(0)[0], arg(1)[0])};
            case Op::BoolNot: return {lit_not(arg(0)[0])};
        }
        throw std::logic_error("unhandled operator");
    }

    Circuit& c_;
    std::unordered_map<TermRef, Bits> cache_;
};

BitValue read_bits(const SatSolver& sat, const Circuit& c, const Bits& bits) {
    BitValue v = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        bool bit;
        if (c.is_const(bits[i])) {
            bit = bits[i] == c.t();
        } else {
            bit = sat.model_value(lit_var(bits[i])) != lit_negated(bits[i]);
        }
        if (bit) v |= BitValue{1} << i;
    }
    return v;
}

}  // namespace

SolveOutcome BitBlastSolver::check(TermFactory& factory, std::span<const TermRef> constraints, Deadline deadline) {
    SolveOutcome outcome;
    const Ackermannized flat = ackermannize(factory, constraints);

    SatSolver sat;
    Circuit circuit(sat);
    Blaster blaster(circuit);
    for (TermRef c : flat.constraints) {
        if (!c->is_bool()) throw std::logic_error("constraint is not Boolean");
        const Lit l = blaster.boolean(c);
        const Lit unit[] = {l};
        sat.add_clause(unit);
    }

    outcome.result = sat.solve(deadline);
    if (outcome.result == SatResult::Unknown) {
        outcome.message = "bit-blasting solver exceeded its time budget";
        return outcome;
    }
    if (outcome.result != SatResult::Sat) return outcome;

    auto value_of = [&](TermRef t) -> BitValue {
        const Bits* bits = blaster.lookup(t);
        return bits ? read_bits(sat, circuit, *bits) : 0;
    };
    for (TermRef leaf : collect_leaves(constraints)) {
        if (leaf->kind == TermKind::Symbol) outcome.model.values[leaf] = value_of(leaf);
    }
    for (const auto& [app, replacement] : flat.applications) outcome.model.values[app] = value_of(replacement);
    return outcome;
}

}  // namespace nl2bpf::symexec
