#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace nl2bpf::symexec {

// Bit-vector payload; widths go up to 128 bits.
using BitValue = unsigned __int128;

constexpr unsigned kMaxWidth = 128;

BitValue mask_of(unsigned width);
BitValue byte_swap(BitValue value, unsigned width);
std::string to_hex(BitValue value, unsigned width);
std::string to_decimal(BitValue value);

enum class TermKind : uint8_t { Const, Symbol, Apply, Op };

enum class Op : uint8_t {
    // Bit-vector valued.
    Add, Sub, Mul, UDiv, SDiv, URem, SRem,
    And, Or, Xor, Shl, LShr, AShr, Not, Neg,
    ZeroExt, SignExt, Extract, Bswap, Ite,
    // Boolean valued.
    Eq, Ult, Ule, Slt, Sle, BoolAnd, BoolOr, BoolNot,
};

bool is_predicate(Op op);
std::string_view op_name(Op op);

// Hash-consed term node. Width 0 denotes the Boolean sort. Terms are owned
// by their TermFactory and compared by address.
struct Term {
    uint32_t id = 0;
    TermKind kind = TermKind::Const;
    Op op = Op::Add;
    unsigned width = 0;
    BitValue value = 0;   // Const payload (0/1 for Booleans)
    std::string name;     // Symbol or uninterpreted function name
    std::vector<const Term*> args;

    bool is_bool() const { return width == 0; }
    bool is_const() const { return kind == TermKind::Const; }
};

using TermRef = const Term*;

class TermFactory {
public:
    TermFactory() = default;
    TermFactory(const TermFactory&) = delete;
    TermFactory& operator=(const TermFactory&) = delete;

    TermRef constant(BitValue value, unsigned width);
    TermRef boolean(bool value);
    TermRef symbol(const std::string& name, unsigned width);
    // Uninterpreted function application; congruence is keyed on
    // (name, argument widths, result width).
    TermRef apply(const std::string& function, std::vector<TermRef> args, unsigned width);
    // Generic constructor with constant folding and light simplification.
    // `param` is the target width for ZeroExt/SignExt/Extract.
    TermRef make(Op op, std::vector<TermRef> args, unsigned param = 0);

    TermRef bool_not(TermRef a) { return make(Op::BoolNot, {a}); }
    TermRef bool_and(TermRef a, TermRef b) { return make(Op::BoolAnd, {a, b}); }
    TermRef bool_or(TermRef a, TermRef b) { return make(Op::BoolOr, {a, b}); }
    TermRef eq(TermRef a, TermRef b) { return make(Op::Eq, {a, b}); }
    TermRef ite(TermRef c, TermRef t, TermRef e) { return make(Op::Ite, {c, t, e}); }
    TermRef conjunction(std::span<const TermRef> terms);

    // Symbols in creation order.
    const std::vector<TermRef>& symbols() const { return symbols_; }
    std::size_t size() const { return nodes_.size(); }

private:
    using Key = std::tuple<uint8_t, uint8_t, unsigned, uint64_t, uint64_t, std::string, std::vector<uint32_t>>;

    TermRef intern(Term node);

    std::deque<Term> nodes_;
    std::map<Key, TermRef> table_;
    std::vector<TermRef> symbols_;
};

// Values for symbols and uninterpreted applications.
struct Assignment {
    std::unordered_map<TermRef, BitValue> values;

    BitValue get(TermRef t) const {
        auto it = values.find(t);
        return it == values.end() ? 0 : it->second;
    }
};

// Concrete evaluation. Unassigned symbols/applications read as zero.
// Booleans evaluate to 0/1. Division semantics follow SMT-LIB
// (x udiv 0 = all ones, x urem 0 = x).
BitValue evaluate(TermRef term, const Assignment& assignment);

// Applies an Op node to already-evaluated argument values.
BitValue evaluate_op(TermRef node, std::span<const BitValue> arg_values);

// Direct (non-Op) leaves reachable from the given roots: symbols and
// applications, in first-visit order; applications are listed after the
// leaves of their arguments.
std::vector<TermRef> collect_leaves(std::span<const TermRef> roots);

// Topological order (children before parents) of every node reachable
// from the roots.
std::vector<TermRef> topological_order(std::span<const TermRef> roots);

// Replaces every uninterpreted application with a fresh symbol and adds
// functional-consistency (Ackermann) constraints.
struct Ackermannized {
    std::vector<TermRef> constraints;
    std::vector<std::pair<TermRef, TermRef>> applications;  // (application, replacement symbol)
};
Ackermannized ackermannize(TermFactory& factory, std::span<const TermRef> constraints);

// Canonical SMT-LIB rendering of a single term (no sharing); used for
// diagnostics and small terms.
std::string to_smtlib_term(TermRef term);
std::string smtlib_sort(unsigned width);
std::string smtlib_symbol(const std::string& name);

}  // namespace nl2bpf::symexec
