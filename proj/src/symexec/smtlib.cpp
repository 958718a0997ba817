#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "nl2bpf/symexec/solver.hpp"
#include "nl2bpf/util/process.hpp"

namespace nl2bpf::symexec {

namespace {

std::string signature_of(TermRef app) {
    std::string sig = app->name + "/" + std::to_string(app->args.size());
    for (TermRef a : app->args) sig += ":" + std::to_string(a->width);
    return sig + "->" + std::to_string(app->width);
}

// Prints a set of constraint DAGs as an SMT-LIB script, naming shared
// interior nodes with define-fun.
class ScriptWriter {
public:
    explicit ScriptWriter(std::span<const TermRef> roots) : order_(topological_order(roots)) {
        std::unordered_map<TermRef, int> parents;
        for (TermRef t : order_) {
            for (TermRef a : t->args) ++parents[a];
        }
        std::map<std::string, std::set<std::string>> signatures_by_name;
        for (TermRef t : order_) {
            if (t->kind == TermKind::Apply) signatures_by_name[t->name].insert(signature_of(t));
            if (t->kind == TermKind::Op && parents[t] > 1) shared_.insert(t);
        }
        for (const auto& [name, sigs] : signatures_by_name) {
            int index = 0;
            for (const auto& sig : sigs) {
                function_names_[sig] = sigs.size() == 1 ? name : name + "#" + std::to_string(index);
                ++index;
            }
        }
    }

    void declarations(std::ostream& out) const {
        std::set<std::string> declared;
        for (TermRef t : order_) {
            if (t->kind == TermKind::Symbol) {
                out << "(declare-fun " << smtlib_symbol(t->name) << " () " << smtlib_sort(t->width) << ")\n";
            } else if (t->kind == TermKind::Apply) {
                const std::string& fname = function_names_.at(signature_of(t));
                if (!declared.insert(fname).second) continue;
                out << "(declare-fun " << smtlib_symbol(fname) << " (";
                for (std::size_t i = 0; i < t->args.size(); ++i) {
                    out << (i ? " " : "") << smtlib_sort(t->args[i]->width);
                }
                out << ") " << smtlib_sort(t->width) << ")\n";
            }
        }
        for (TermRef t : order_) {
            if (!shared_.contains(t)) continue;
            out << "(define-fun " << shared_name(t) << " () " << smtlib_sort(t->width) << " " << print(t, true)
                << ")\n";
        }
    }

    std::string print(TermRef t, bool expand_root = false) const {
        if (!expand_root && shared_.contains(t)) return shared_name(t);
        switch (t->kind) {
            case TermKind::Const:
            case TermKind::Symbol: return to_smtlib_term(t);
            case TermKind::Apply: {
                std::string out = "(" + smtlib_symbol(function_names_.at(signature_of(t)));
                for (TermRef a : t->args) out += " " + print(a);
                return out + ")";
            }
            case TermKind::Op: break;
        }
        const unsigned param = static_cast<unsigned>(t->value);
        std::string head;
        switch (t->op) {
            case Op::ZeroExt: head = "(_ zero_extend " + std::to_string(param - t->args[0]->width) + ")"; break;
            case Op::SignExt: head = "(_ sign_extend " + std::to_string(param - t->args[0]->width) + ")"; break;
            case Op::Extract: head = "(_ extract " + std::to_string(param - 1) + " 0)"; break;
            case Op::Bswap: {
                const std::string inner = print(t->args[0]);
                const unsigned bytes = t->width / 8;
                if (bytes == 1) return inner;
                std::string out = "(concat";
                for (unsigned i = 0; i < bytes; ++i) {
                    out += " ((_ extract " + std::to_string(8 * i + 7) + " " + std::to_string(8 * i) + ") " + inner + ")";
                }
                return out + ")";
            }
            default: head = std::string(op_name(t->op));
        }
        std::string out = "(" + head;
        for (TermRef a : t->args) out += " " + print(a);
        return out + ")";
    }

    std::vector<TermRef> leaves() const {
        std::vector<TermRef> out;
        for (TermRef t : order_) {
            if (t->kind == TermKind::Symbol || t->kind == TermKind::Apply) out.push_back(t);
        }
        return out;
    }

private:
    static std::string shared_name(TermRef t) { return "|t!" + std::to_string(t->id) + "|"; }

    std::vector<TermRef> order_;
    std::set<TermRef> shared_;
    std::map<std::string, std::string> function_names_;
};

// Minimal s-expression reader for solver responses.
struct SExpr {
    std::string atom;
    std::vector<SExpr> list;
    bool is_list = false;
};

class SExprReader {
public:
    explicit SExprReader(std::string_view text) : text_(text) {}

    std::optional<SExpr> next() {
        skip_space();
        if (pos_ >= text_.size()) return std::nullopt;
        return read();
    }

private:
    void skip_space() {
        while (pos_ < text_.size()) {
            if (std::isspace(static_cast<unsigned char>(text_[pos_]))) {
                ++pos_;
            } else if (text_[pos_] == ';') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    SExpr read() {
        skip_space();
        if (pos_ >= text_.size()) throw std::runtime_error("unexpected end of solver output");
        SExpr e;
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            e.is_list = true;
            for (;;) {
                skip_space();
                if (pos_ >= text_.size()) throw std::runtime_error("unbalanced solver output");
                if (text_[pos_] == ')') {
                    ++pos_;
                    return e;
                }
                e.list.push_back(read());
            }
        }
        if (c == ')') throw std::runtime_error("unexpected ')' in solver output");
        if (c == '|') {
            std::size_t end = text_.find('|', pos_ + 1);
            if (end == std::string_view::npos) throw std::runtime_error("unterminated quoted symbol");
            e.atom = std::string(text_.substr(pos_, end - pos_ + 1));
            pos_ = end + 1;
            return e;
        }
        if (c == '"') {
            std::size_t end = pos_ + 1;
            while (end < text_.size()) {
                if (text_[end] == '"') {
                    if (end + 1 < text_.size() && text_[end + 1] == '"') {
                        end += 2;
                        continue;
                    }
                    break;
                }
                ++end;
            }
            e.atom = std::string(text_.substr(pos_, end - pos_ + 1));
            pos_ = std::min(end + 1, text_.size());
            return e;
        }
        std::size_t start = pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '(' &&
               text_[pos_] != ')') {
            ++pos_;
        }
        e.atom = std::string(text_.substr(start, pos_ - start));
        return e;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

BitValue parse_value(const SExpr& v) {
    if (!v.is_list) {
        const std::string& a = v.atom;
        if (a == "true") return 1;
        if (a == "false") return 0;
        BitValue out = 0;
        if (a.starts_with("#x")) {
            for (char c : a.substr(2)) {
                int d = std::isdigit(static_cast<unsigned char>(c)) ? c - '0' : std::tolower(c) - 'a' + 10;
                out = (out << 4) | static_cast<unsigned>(d);
            }
            return out;
        }
        if (a.starts_with("#b")) {
            for (char c : a.substr(2)) out = (out << 1) | static_cast<unsigned>(c == '1');
            return out;
        }
        throw std::runtime_error("unrecognized solver value '" + a + "'");
    }
    // (_ bvN w)
    if (v.list.size() == 3 && v.list[0].atom == "_" && v.list[1].atom.starts_with("bv")) {
        BitValue out = 0;
        for (char c : v.list[1].atom.substr(2)) out = out * 10 + static_cast<unsigned>(c - '0');
        return out;
    }
    throw std::runtime_error("unrecognized solver value");
}

}  // namespace

std::string emit_smtlib(std::span<const TermRef> constraints, TermRef goal) {
    std::vector<TermRef> roots(constraints.begin(), constraints.end());
    roots.push_back(goal);
    ScriptWriter writer(roots);
    std::ostringstream out;
    out << "(set-option :produce-models true)\n";
    out << "(set-logic QF_AUFBV)\n";
    writer.declarations(out);
    for (TermRef c : constraints) out << "(assert " << writer.print(c) << ")\n";
    out << "(assert (not " << writer.print(goal) << "))\n";
    out << "(check-sat)\n(get-model)\n";
    return out.str();
}

std::string SmtLibProcessSolver::build_query(std::span<const TermRef> constraints) {
    ScriptWriter writer(constraints);
    std::ostringstream out;
    out << "(set-option :produce-models true)\n";
    out << "(set-logic QF_AUFBV)\n";
    writer.declarations(out);
    for (TermRef c : constraints) out << "(assert " << writer.print(c) << ")\n";
    out << "(check-sat)\n";
    const auto leaves = writer.leaves();
    if (!leaves.empty()) {
        out << "(get-value (";
        for (std::size_t i = 0; i < leaves.size(); ++i) out << (i ? " " : "") << writer.print(leaves[i]);
        out << "))\n";
    }
    out << "(exit)\n";
    return out.str();
}

SmtLibProcessSolver::SmtLibProcessSolver(std::string executable, std::vector<std::string> arguments)
    : executable_(std::move(executable)), arguments_(std::move(arguments)) {}

SolveOutcome SmtLibProcessSolver::check(TermFactory&, std::span<const TermRef> constraints, Deadline deadline) {
    SolveOutcome outcome;
    const std::string query = build_query(constraints);
    std::vector<std::string> argv{executable_};
    argv.insert(argv.end(), arguments_.begin(), arguments_.end());
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
        outcome.message = "no time left for solver query";
        return outcome;
    }
    auto result = util::run_process(argv, query, remaining);
    if (!result) throw std::runtime_error("cannot start SMT solver '" + executable_ + "'");
    if (result->timed_out) {
        outcome.message = "SMT solver timed out";
        return outcome;
    }

    SExprReader reader(result->out);
    auto status = reader.next();
    if (!status || status->is_list) {
        throw std::runtime_error("unexpected SMT solver output: " + result->out + result->err);
    }
    if (status->atom == "unsat") {
        outcome.result = SatResult::Unsat;
        return outcome;
    }
    if (status->atom == "unknown") {
        outcome.message = "SMT solver returned unknown";
        return outcome;
    }
    if (status->atom != "sat") throw std::runtime_error("unexpected SMT solver output: " + result->out);
    outcome.result = SatResult::Sat;

    ScriptWriter writer(constraints);
    const auto leaves = writer.leaves();
    if (leaves.empty()) return outcome;
    auto values = reader.next();
    if (!values || !values->is_list || values->list.size() != leaves.size()) {
        throw std::runtime_error("malformed get-value response from SMT solver");
    }
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        const SExpr& pair = values->list[i];
        if (!pair.is_list || pair.list.size() != 2) throw std::runtime_error("malformed get-value pair");
        outcome.model.values[leaves[i]] = parse_value(pair.list[1]);
    }
    return outcome;
}

std::unique_ptr<Solver> make_solver(const std::string& kind, const std::string& executable) {
    if (kind == "bitblast" || kind.empty()) return std::make_unique<BitBlastSolver>();
    if (kind == "enumerator") return std::make_unique<EnumeratorSolver>();
    if (kind == "smtlib") {
        if (executable.empty()) throw std::invalid_argument("smtlib solver requires an executable path");
        std::vector<std::string> args;
        const auto slash = executable.find_last_of('/');
        const std::string base = slash == std::string::npos ? executable : executable.substr(slash + 1);
        if (base == "z3") args.push_back("-in");
        if (base == "cvc5" || base == "cvc4") args = {"--lang=smt2", "--produce-models"};
        return std::make_unique<SmtLibProcessSolver>(executable, std::move(args));
    }
    throw std::invalid_argument("unknown solver backend '" + kind + "'");
}

}  // namespace nl2bpf::symexec
