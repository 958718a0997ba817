#include "nl2bpf/symexec/sat.hpp"

#include <algorithm>

namespace nl2bpf::symexec {

namespace {

// Luby restart sequence: 1 1 2 1 1 2 4 ...
double luby(double y, int x) {
    int size = 1;
    int seq = 0;
    while (size < x + 1) {
        ++seq;
        size = 2 * size + 1;
    }
    while (size - 1 != x) {
        size = (size - 1) >> 1;
        --seq;
        x = x % size;
    }
    double r = 1;
    for (int i = 0; i < seq; ++i) r *= y;
    return r;
}

constexpr int32_t kNoReason = -1;
constexpr Lit kNoLit = ~Lit{0};

}  // namespace

uint32_t SatSolver::new_var() {
    uint32_t v = num_vars();
    assigns_.push_back(kUndef);
    polarity_.push_back(kFalse);
    levels_.push_back(0);
    reasons_.push_back(kNoReason);
    activity_.push_back(0.0);
    seen_.push_back(0);
    heap_index_.push_back(-1);
    watches_.emplace_back();
    watches_.emplace_back();
    heap_insert(v);
    return v;
}

bool SatSolver::add_clause(std::span<const Lit> input) {
    if (unsat_) return false;
    std::vector<Lit> lits(input.begin(), input.end());
    std::sort(lits.begin(), lits.end());
    lits.erase(std::unique(lits.begin(), lits.end()), lits.end());
    std::vector<Lit> kept;
    for (std::size_t i = 0; i < lits.size(); ++i) {
        if (i + 1 < lits.size() && lits[i + 1] == lit_not(lits[i])) return true;  // tautology
        int8_t v = value(lits[i]);
        if (v == kTrue && levels_[lit_var(lits[i])] == 0) return true;
        if (v == kFalse && levels_[lit_var(lits[i])] == 0) continue;
        kept.push_back(lits[i]);
    }
    if (kept.empty()) {
        unsat_ = true;
        return false;
    }
    if (kept.size() == 1) {
        if (value(kept[0]) == kUndef) enqueue(kept[0], kNoReason);
        return true;
    }
    clauses_.push_back({std::move(kept), false});
    attach(static_cast<int32_t>(clauses_.size() - 1));
    return true;
}

void SatSolver::attach(int32_t index) {
    const auto& c = clauses_[static_cast<std::size_t>(index)];
    watches_[c.lits[0]].push_back(index);
    watches_[c.lits[1]].push_back(index);
}

void SatSolver::enqueue(Lit l, int32_t reason) {
    uint32_t v = lit_var(l);
    assigns_[v] = lit_negated(l) ? kFalse : kTrue;
    levels_[v] = level();
    reasons_[v] = reason;
    trail_.push_back(l);
}

int32_t SatSolver::propagate() {
    while (qhead_ < trail_.size()) {
        const Lit false_lit = lit_not(trail_[qhead_++]);
        auto& ws = watches_[false_lit];
        std::size_t i = 0;
        std::size_t j = 0;
        while (i < ws.size()) {
            const int32_t ci = ws[i++];
            auto& lits = clauses_[static_cast<std::size_t>(ci)].lits;
            if (lits[0] == false_lit) std::swap(lits[0], lits[1]);
            if (value(lits[0]) == kTrue) {
                ws[j++] = ci;
                continue;
            }
            bool moved = false;
            for (std::size_t k = 2; k < lits.size(); ++k) {
                if (value(lits[k]) != kFalse) {
                    std::swap(lits[1], lits[k]);
                    watches_[lits[1]].push_back(ci);
                    moved = true;
                    break;
                }
            }
            if (moved) continue;
            ws[j++] = ci;
            if (value(lits[0]) == kFalse) {
                while (i < ws.size()) ws[j++] = ws[i++];
                ws.resize(j);
                qhead_ = trail_.size();
                return ci;
            }
            enqueue(lits[0], ci);
        }
        ws.resize(j);
    }
    return kNoReason;
}

void SatSolver::analyze(int32_t conflict, std::vector<Lit>& learnt, int& backtrack_level) {
    learnt.clear();
    learnt.push_back(kNoLit);
    int pending = 0;
    Lit p = kNoLit;
    std::size_t index = trail_.size();
    int32_t ci = conflict;
    do {
        const auto& lits = clauses_[static_cast<std::size_t>(ci)].lits;
        for (std::size_t k = (p == kNoLit ? 0 : 1); k < lits.size(); ++k) {
            const Lit q = lits[k];
            const uint32_t v = lit_var(q);
            if (seen_[v] || levels_[v] == 0) continue;
            bump(v);
            seen_[v] = 1;
            if (levels_[v] >= level()) {
                ++pending;
            } else {
                learnt.push_back(q);
            }
        }
        do {
            --index;
        } while (!seen_[lit_var(trail_[index])]);
        p = trail_[index];
        ci = reasons_[lit_var(p)];
        seen_[lit_var(p)] = 0;
        --pending;
    } while (pending > 0);
    learnt[0] = lit_not(p);

    backtrack_level = 0;
    std::size_t max_pos = 1;
    for (std::size_t k = 1; k < learnt.size(); ++k) {
        int lv = levels_[lit_var(learnt[k])];
        if (lv > backtrack_level) {
            backtrack_level = lv;
            max_pos = k;
        }
    }
    if (learnt.size() > 1) std::swap(learnt[1], learnt[max_pos]);
    for (Lit l : learnt) seen_[lit_var(l)] = 0;
}

void SatSolver::backtrack(int target) {
    if (level() <= target) return;
    const std::size_t stop = trail_lim_[static_cast<std::size_t>(target)];
    for (std::size_t i = trail_.size(); i > stop; --i) {
        const uint32_t v = lit_var(trail_[i - 1]);
        polarity_[v] = assigns_[v];
        assigns_[v] = kUndef;
        reasons_[v] = kNoReason;
        if (heap_index_[v] < 0) heap_insert(v);
    }
    trail_.resize(stop);
    trail_lim_.resize(static_cast<std::size_t>(target));
    qhead_ = trail_.size();
}

void SatSolver::bump(uint32_t var) {
    activity_[var] += var_inc_;
    if (activity_[var] > 1e100) {
        for (auto& a : activity_) a *= 1e-100;
        var_inc_ *= 1e-100;
    }
    if (heap_index_[var] >= 0) heap_up(static_cast<std::size_t>(heap_index_[var]));
}

void SatSolver::heap_insert(uint32_t var) {
    heap_index_[var] = static_cast<int32_t>(heap_.size());
    heap_.push_back(var);
    heap_up(heap_.size() - 1);
}

void SatSolver::heap_up(std::size_t pos) {
    const uint32_t v = heap_[pos];
    while (pos > 0) {
        std::size_t parent = (pos - 1) / 2;
        if (activity_[heap_[parent]] >= activity_[v]) break;
        heap_[pos] = heap_[parent];
        heap_index_[heap_[pos]] = static_cast<int32_t>(pos);
        pos = parent;
    }
    heap_[pos] = v;
    heap_index_[v] = static_cast<int32_t>(pos);
}

void SatSolver::heap_down(std::size_t pos) {
    const uint32_t v = heap_[pos];
    for (;;) {
        std::size_t child = 2 * pos + 1;
        if (child >= heap_.size()) break;
        if (child + 1 < heap_.size() && activity_[heap_[child + 1]] > activity_[heap_[child]]) ++child;
        if (activity_[heap_[child]] <= activity_[v]) break;
        heap_[pos] = heap_[child];
        heap_index_[heap_[pos]] = static_cast<int32_t>(pos);
        pos = child;
    }
    heap_[pos] = v;
    heap_index_[v] = static_cast<int32_t>(pos);
}

uint32_t SatSolver::heap_pop() {
    const uint32_t top = heap_.front();
    heap_index_[top] = -1;
    const uint32_t last = heap_.back();
    heap_.pop_back();
    if (!heap_.empty()) {
        heap_[0] = last;
        heap_index_[last] = 0;
        heap_down(0);
    }
    return top;
}

Lit SatSolver::pick_branch() {
    while (!heap_.empty()) {
        const uint32_t v = heap_pop();
        if (assigns_[v] == kUndef) return make_lit(v, polarity_[v] != kTrue);
    }
    return kNoLit;
}

SatResult SatSolver::solve(Deadline deadline) {
    if (unsat_) return SatResult::Unsat;
    std::vector<Lit> learnt;
    int restart = 0;
    uint64_t decisions = 0;
    for (;;) {
        const double limit = luby(2.0, restart++) * 100;
        uint64_t local_conflicts = 0;
        for (;;) {
            const int32_t conflict = propagate();
            if (conflict != kNoReason) {
                ++conflicts_;
                ++local_conflicts;
                if (level() == 0) {
                    unsat_ = true;
                    return SatResult::Unsat;
                }
                int bt = 0;
                analyze(conflict, learnt, bt);
                backtrack(bt);
                if (learnt.size() == 1) {
                    enqueue(learnt[0], kNoReason);
                } else {
                    clauses_.push_back({learnt, true});
                    const auto index = static_cast<int32_t>(clauses_.size() - 1);
                    attach(index);
                    enqueue(learnt[0], index);
                }
                var_inc_ /= 0.95;
                if ((conflicts_ & 255) == 0 && std::chrono::steady_clock::now() > deadline) {
                    backtrack(0);
                    return SatResult::Unknown;
                }
                continue;
            }
            if (static_cast<double>(local_conflicts) >= limit) {
                backtrack(0);
                break;
            }
            if ((++decisions & 4095) == 0 && std::chrono::steady_clock::now() > deadline) {
                backtrack(0);
                return SatResult::Unknown;
            }
            const Lit next = pick_branch();
            if (next == kNoLit) {
                model_.assign(assigns_.size(), false);
                for (std::size_t v = 0; v < assigns_.size(); ++v) model_[v] = assigns_[v] == kTrue;
                backtrack(0);
                return SatResult::Sat;
            }
            trail_lim_.push_back(trail_.size());
            enqueue(next, kNoReason);
        }
    }
}

}  // namespace nl2bpf::symexec
