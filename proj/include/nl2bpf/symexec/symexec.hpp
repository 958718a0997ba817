#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "nl2bpf/ast.hpp"
#include "nl2bpf/symexec/solver.hpp"
#include "nl2bpf/symexec/term.hpp"

namespace nl2bpf::symexec {

struct FieldType {
    unsigned width = 64;
    bool is_signed = false;
    bool operator==(const FieldType&) const = default;
};

// Bit widths of kernel struct fields and tracepoint arguments, keyed by
// field path ("__sk_common.skc_dport") or argument ("args.pid").
class KernelTypeMap {
public:
    // skc_dport/skc_num: uint16; skc_rcv_saddr/skc_daddr: uint32.
    static KernelTypeMap defaults();

    // Accepts {"path": "uint16"} or {"path": {"width": 16, "signed": false}}.
    static KernelTypeMap from_json(const nlohmann::json& j);
    static KernelTypeMap load(const std::string& path);
    nlohmann::json to_json() const;

    // Throws std::invalid_argument unless width is 8/16/32/64/128.
    void set(const std::string& path, FieldType type);
    // Exact path first, then the last dotted component; 64-bit unsigned
    // if neither is known.
    FieldType lookup(const std::string& path) const;
    bool contains(const std::string& path) const { return entries_.contains(path); }

private:
    std::map<std::string, FieldType> entries_;
};

// Typed symbolic value. The term kind tells Concrete / Symbolic / Op /
// Uninterpreted apart; Boolean terms (width 0) come from comparisons.
struct SymValue {
    TermRef term = nullptr;
    bool is_signed = false;

    enum class Kind { Concrete, Symbolic, Op, Uninterpreted };
    Kind kind() const;
    unsigned width() const { return term->width; }
};

struct MapWrite {
    std::vector<TermRef> keys;
    TermRef value = nullptr;  // nullptr for delete
};

// An obligation raised while evaluating an expression (division by a
// possibly-zero value). `holds` must be valid on the current path.
struct ImplicitGoal {
    TermRef holds = nullptr;
    ast::SourceLoc loc;
    std::string description;
};

struct SymState {
    std::map<std::string, SymValue> env;
    std::map<std::string, std::vector<MapWrite>> maps;
    std::vector<TermRef> path;
    std::vector<TermRef> assumptions;
    std::map<std::string, TermRef> field_model;  // "<base>-><path>" -> symbol
    std::vector<ImplicitGoal> pending_goals;
    // Conditions under which the expression being evaluated actually runs
    // (short-circuit context).
    std::vector<TermRef> guards;
};

// Evaluates an expression in `state`. Division by a non-constant or zero
// divisor appends to state.pending_goals. Throws UnsupportedExpr.
SymValue eval_expr(TermFactory& factory, SymState& state, const ast::Expr& e, const KernelTypeMap& types);

class UnsupportedExpr : public std::runtime_error {
public:
    UnsupportedExpr(ast::SourceLoc loc, const std::string& what);
    ast::SourceLoc loc() const { return loc_; }

private:
    ast::SourceLoc loc_;
};

struct CounterexampleValue {
    unsigned width = 64;
    BitValue value = 0;
};

struct Verified {};

struct AssertViolation {
    ast::SourceLoc loc;
    std::map<std::string, CounterexampleValue> counterexample;
    std::string message;
};

struct Timeout {
    std::chrono::milliseconds elapsed{0};
    std::string message;
};

struct SolverError {
    std::string message;
};

using Verdict = std::variant<Verified, AssertViolation, Timeout, SolverError>;

std::string describe(const Verdict& verdict);
nlohmann::json to_json(const Verdict& verdict);

struct VerifyOptions {
    std::chrono::milliseconds budget{30000};
    std::size_t fork_cap = 64;
    Solver* solver = nullptr;  // built-in bit-blaster when null
};

// Explores every path of every clause (then-branch first) and checks each
// assert, and each implicit goal, against path and assumptions. The first
// violation in clause / path / statement order wins.
Verdict verify(const ast::Program& program, const KernelTypeMap& types, const VerifyOptions& options = {});

}  // namespace nl2bpf::symexec
