#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <vector>

namespace nl2bpf::symexec {

using Deadline = std::chrono::steady_clock::time_point;

enum class SatResult { Sat, Unsat, Unknown };

// Literal encoding: 2 * var + (negated ? 1 : 0).
using Lit = uint32_t;

inline Lit make_lit(uint32_t var, bool negated = false) { return 2 * var + (negated ? 1 : 0); }
inline uint32_t lit_var(Lit l) { return l >> 1; }
inline bool lit_negated(Lit l) { return (l & 1) != 0; }
inline Lit lit_not(Lit l) { return l ^ 1; }

// Conflict-driven clause-learning SAT solver: two watched literals, 1-UIP
// learning, VSIDS branching with phase saving, Luby restarts.
class SatSolver {
public:
    uint32_t new_var();
    uint32_t num_vars() const { return static_cast<uint32_t>(assigns_.size()); }

    // Returns false once the clause set is trivially unsatisfiable.
    bool add_clause(std::span<const Lit> lits);

    // Unknown if the deadline passes first.
    SatResult solve(Deadline deadline);

    bool model_value(uint32_t var) const { return model_[var]; }

    uint64_t conflicts() const { return conflicts_; }

private:
    enum : int8_t { kFalse = 0, kTrue = 1, kUndef = 2 };

    struct Clause {
        std::vector<Lit> lits;
        bool learnt = false;
    };

    int8_t value(Lit l) const {
        int8_t v = assigns_[lit_var(l)];
        if (v == kUndef) return kUndef;
        return static_cast<int8_t>(v ^ static_cast<int8_t>(lit_negated(l)));
    }

    void enqueue(Lit l, int32_t reason);
    int32_t propagate();
    void analyze(int32_t conflict, std::vector<Lit>& learnt, int& backtrack_level);
    void backtrack(int level);
    Lit pick_branch();
    void bump(uint32_t var);
    void attach(int32_t clause_index);
    int level() const { return static_cast<int>(trail_lim_.size()); }

    // Binary max-heap over variable activity.
    void heap_insert(uint32_t var);
    void heap_up(std::size_t pos);
    void heap_down(std::size_t pos);
    uint32_t heap_pop();

    std::vector<Clause> clauses_;
    std::vector<std::vector<int32_t>> watches_;  // per literal
    std::vector<int8_t> assigns_;
    std::vector<int8_t> polarity_;
    std::vector<int> levels_;
    std::vector<int32_t> reasons_;
    std::vector<double> activity_;
    std::vector<Lit> trail_;
    std::vector<std::size_t> trail_lim_;
    std::size_t qhead_ = 0;
    std::vector<uint32_t> heap_;
    std::vector<int32_t> heap_index_;
    std::vector<uint8_t> seen_;
    std::vector<bool> model_;
    double var_inc_ = 1.0;
    bool unsat_ = false;
    uint64_t conflicts_ = 0;
};

}  // namespace nl2bpf::symexec
