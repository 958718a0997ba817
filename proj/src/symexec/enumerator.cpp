#include <unordered_map>

#include "nl2bpf/symexec/solver.hpp"

namespace nl2bpf::symexec {

bool EnumeratorSolver::applicable(std::span<const TermRef> constraints) {
    const auto leaves = collect_leaves(constraints);
    if (leaves.size() > kMaxSymbols) return false;
    for (TermRef leaf : leaves) {
        if (leaf->width > kMaxSymbolWidth) return false;
    }
    return true;
}

SolveOutcome EnumeratorSolver::check(TermFactory& factory, std::span<const TermRef> constraints, Deadline deadline) {
    SolveOutcome outcome;
    if (!applicable(constraints)) {
        outcome.result = SatResult::Unknown;
        outcome.message = "enumerator requires at most 3 symbols of at most 8 bits";
        return outcome;
    }
    const Ackermannized flat = ackermannize(factory, constraints);
    const TermRef goal = factory.conjunction(flat.constraints);
    const TermRef roots[] = {goal};
    const std::vector<TermRef> order = topological_order(roots);

    // Flat program: slot per node, children precede parents.
    std::unordered_map<TermRef, std::size_t> slot;
    for (std::size_t i = 0; i < order.size(); ++i) slot[order[i]] = i;
    std::vector<TermRef> symbols;
    for (TermRef t : order) {
        if (t->kind == TermKind::Symbol) symbols.push_back(t);
    }
    std::vector<std::vector<std::size_t>> arg_slots(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (TermRef a : order[i]->args) arg_slots[i].push_back(slot.at(a));
    }

    std::vector<BitValue> values(order.size(), 0);
    std::vector<BitValue> args(3, 0);
    std::vector<BitValue> current(symbols.size(), 0);
    uint64_t total_bits = 0;
    for (TermRef s : symbols) total_bits += s->width == 0 ? 1 : s->width;
    const uint64_t total = uint64_t{1} << total_bits;

    for (uint64_t index = 0; index < total; ++index) {
        if ((index & 0xffff) == 0xffff && std::chrono::steady_clock::now() > deadline) {
            outcome.result = SatResult::Unknown;
            outcome.message = "enumeration exceeded its time budget";
            return outcome;
        }
        uint64_t rest = index;
        for (std::size_t s = 0; s < symbols.size(); ++s) {
            const unsigned w = symbols[s]->width == 0 ? 1 : symbols[s]->width;
            current[s] = rest & ((uint64_t{1} << w) - 1);
            rest >>= w;
        }
        std::size_t next_symbol = 0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            const TermRef t = order[i];
            switch (t->kind) {
                case TermKind::Const: values[i] = t->value; break;
                case TermKind::Symbol: values[i] = current[next_symbol++]; break;
                case TermKind::Apply: values[i] = 0; break;  // removed by ackermannize
                case TermKind::Op: {
                    const auto& slots = arg_slots[i];
                    for (std::size_t k = 0; k < slots.size(); ++k) args[k] = values[slots[k]];
                    values[i] = evaluate_op(t, std::span<const BitValue>(args.data(), slots.size()));
                    break;
                }
            }
        }
        if (values.back() != 0) {
            outcome.result = SatResult::Sat;
            Assignment flat_model;
            for (std::size_t s = 0; s < symbols.size(); ++s) flat_model.values[symbols[s]] = current[s];
            for (TermRef leaf : collect_leaves(constraints)) {
                if (leaf->kind == TermKind::Symbol) outcome.model.values[leaf] = flat_model.get(leaf);
            }
            for (const auto& [app, replacement] : flat.applications) {
                outcome.model.values[app] = flat_model.get(replacement);
            }
            return outcome;
        }
    }
    outcome.result = SatResult::Unsat;
    return outcome;
}

}  // namespace nl2bpf::symexec
