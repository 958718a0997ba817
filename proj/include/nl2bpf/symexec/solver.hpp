#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nl2bpf/symexec/sat.hpp"
#include "nl2bpf/symexec/term.hpp"

namespace nl2bpf::symexec {

struct SolveOutcome {
    SatResult result = SatResult::Unknown;
    // Values for every symbol and application reachable from the
    // constraints (only meaningful when result == Sat).
    Assignment model;
    std::string message;
};

// Decides satisfiability of a conjunction of Boolean terms.
class Solver {
public:
    virtual ~Solver() = default;
    virtual std::string name() const = 0;
    virtual SolveOutcome check(TermFactory& factory, std::span<const TermRef> constraints, Deadline deadline) = 0;
};

// Built-in bit-blaster over the CDCL SAT solver. Handles every term kind;
// uninterpreted applications are expanded with Ackermann constraints.
class BitBlastSolver final : public Solver {
public:
    std::string name() const override { return "bitblast"; }
    SolveOutcome check(TermFactory& factory, std::span<const TermRef> constraints, Deadline deadline) override;
};

// Exhaustive enumeration over every assignment. Only applicable when all
// leaves (symbols and applications) are at most 8 bits wide and there are
// at most three of them; otherwise reports Unknown with a message.
class EnumeratorSolver final : public Solver {
public:
    static constexpr unsigned kMaxSymbolWidth = 8;
    static constexpr std::size_t kMaxSymbols = 3;

    std::string name() const override { return "enumerator"; }
    SolveOutcome check(TermFactory& factory, std::span<const TermRef> constraints, Deadline deadline) override;

    static bool applicable(std::span<const TermRef> constraints);
};

// External solver speaking SMT-LIB v2 on stdin/stdout (one process per query).
class SmtLibProcessSolver final : public Solver {
public:
    SmtLibProcessSolver(std::string executable, std::vector<std::string> arguments);

    std::string name() const override { return "smtlib:" + executable_; }
    SolveOutcome check(TermFactory& factory, std::span<const TermRef> constraints, Deadline deadline) override;

    // The query script sent to the process: declarations, assertions,
    // check-sat and a get-value over all leaves.
    static std::string build_query(std::span<const TermRef> constraints);

private:
    std::string executable_;
    std::vector<std::string> arguments_;
};

// SMT-LIB v2 script asserting every constraint plus the negated goal,
// followed by (check-sat) and (get-model).
std::string emit_smtlib(std::span<const TermRef> constraints, TermRef goal);

// Creates a solver by config name: "bitblast", "enumerator", or
// "smtlib" (requires an executable path; "-in" is passed for z3).
std::unique_ptr<Solver> make_solver(const std::string& kind, const std::string& executable = "");

}  // namespace nl2bpf::symexec
