#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <fmt/format.h>

#include "nl2bpf/btparse.hpp"
#include "nl2bpf/safety.hpp"
#include "nl2bpf/util/process.hpp"

namespace nl2bpf::safety {

using namespace nl2bpf::ast;

std::string_view to_string(Mode mode) { return mode == Mode::Builtin ? "builtin" : "external"; }

std::optional<Mode> mode_from_string(std::string_view s) {
    if (s == "builtin") return Mode::Builtin;
    if (s == "external") return Mode::External;
    return std::nullopt;
}

std::string SafetyReport::summary() const {
    std::string out;
    for (const auto& m : messages) out += (out.empty() ? "" : "\n") + m;
    return out;
}

namespace {

std::string where(SourceLoc loc) { return fmt::format("line {}:{}", loc.line, loc.column); }

class BuiltinChecker {
public:
    explicit BuiltinChecker(const SafetyOptions& options) : options_(options) {}

    void clause(const ProbeClause& c) {
        for (const auto& p : c.attach_points) {
            if (p.target.empty() || p.target.find_first_of(" \t\n") != std::string::npos) {
                fail(p.loc, "invalid probe target \"" + p.target + "\"");
            }
            if (p.kind == ProbeKind::Tracepoint && p.target.find(':') == std::string::npos) {
                fail(p.loc, "tracepoint " + p.target + " needs the form category:name");
            }
        }
        if (c.predicate) expr(*c.predicate);
        block(c.body);
    }

    std::vector<std::string> messages;

private:
    void fail(SourceLoc loc, const std::string& what) { messages.push_back(where(loc) + ": " + what); }

    void block(const std::vector<Stmt>& body) {
        for (const auto& s : body) stmt(s);
    }

    void keys(const std::string& map, const std::vector<Expr>& ks, SourceLoc loc) {
        for (const auto& k : ks) {
            if (!plain_key(k)) {
                fail(k.loc.line ? k.loc : loc, "key of @" + map + " must be built from builtins, scratch variables "
                                               "and constants: " + btparse::render(k));
            }
            expr(k);
        }
    }

    // Builtins, scratch variables, literals and arithmetic over them.
    static bool plain_key(const Expr& e) {
        return std::visit(
            [](const auto& n) -> bool {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, IntLit> || std::is_same_v<T, StrLit> ||
                              std::is_same_v<T, BuiltinVar> || std::is_same_v<T, ScratchVar>) {
                    return true;
                } else if constexpr (std::is_same_v<T, Cast> || std::is_same_v<T, Unary>) {
                    return plain_key(*n.operand);
                } else if constexpr (std::is_same_v<T, Binary>) {
                    return plain_key(*n.lhs) && plain_key(*n.rhs);
                } else {
                    return false;
                }
            },
            e.node);
    }

    void expr(const Expr& e) {
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, MapAccess>) {
                    keys(n.name, n.keys, e.loc);
                } else if constexpr (std::is_same_v<T, FieldChain>) {
                    expr(*n.base);
                } else if constexpr (std::is_same_v<T, Cast> || std::is_same_v<T, Unary>) {
                    expr(*n.operand);
                } else if constexpr (std::is_same_v<T, Binary>) {
                    expr(*n.lhs);
                    expr(*n.rhs);
                    if ((n.op == BinaryOp::Div || n.op == BinaryOp::Mod)) {
                        if (const auto* lit = std::get_if<IntLit>(&n.rhs->node); lit && lit->value == 0) {
                            fail(e.loc, "division by constant zero");
                        }
                    }
                } else if constexpr (std::is_same_v<T, Call>) {
                    for (const auto& a : n.args) expr(a);
                }
            },
            e.node);
    }

    void stmt(const Stmt& s) {
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, Assign>) {
                    expr(n.value);
                } else if constexpr (std::is_same_v<T, MapAssign>) {
                    keys(n.map, n.keys, s.loc);
                    expr(n.value);
                } else if constexpr (std::is_same_v<T, FieldAssign>) {
                    fail(s.loc, "write through pointer field " + btparse::render(n.target) + " is not allowed");
                    expr(n.value);
                } else if constexpr (std::is_same_v<T, Delete>) {
                    keys(n.map, n.keys, s.loc);
                } else if constexpr (std::is_same_v<T, Printf>) {
                    for (const auto& a : n.args) expr(a);
                } else if constexpr (std::is_same_v<T, ExprStmt>) {
                    expr(n.expr);
                } else if constexpr (std::is_same_v<T, If>) {
                    expr(n.cond);
                    block(n.then_body);
                    block(n.else_body);
                } else if constexpr (std::is_same_v<T, Unroll>) {
                    if (n.count < 1 || n.count > options_.max_unroll) {
                        fail(s.loc, fmt::format("unroll count {} outside 1..{}", n.count, options_.max_unroll));
                    }
                    block(n.body);
                } else {
                    throw AnnotationsPresent();
                }
            },
            s.node);
    }

    const SafetyOptions& options_;
};

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

SafetyReport run_external(const Program& program, const SafetyOptions& options) {
    std::vector<std::string> argv = split_ws(options.command);
    if (argv.empty()) throw ExternalToolMissing("safety.command is empty");
    if (!util::find_executable(argv[0])) throw ExternalToolMissing("safety command not found: " + argv[0]);

    std::string path = (std::filesystem::temp_directory_path() / "nl2bpf-XXXXXX.bt").string();
    const int fd = mkstemps(path.data(), 3);
    if (fd < 0) throw std::runtime_error("cannot create temporary file for the safety check");
    close(fd);
    {
        std::ofstream out(path, std::ios::trunc);
        out << btparse::render(program);
    }
    for (auto& a : argv) {
        for (std::size_t at; (at = a.find("{file}")) != std::string::npos;) a.replace(at, 6, path);
    }
    auto result = util::run_process(argv, "", options.timeout);
    std::filesystem::remove(path);
    if (!result) throw ExternalToolMissing("cannot start safety command: " + argv[0]);

    SafetyReport report;
    report.mode = Mode::External;
    if (result->timed_out) {
        report.ok = false;
        report.messages.push_back(fmt::format("safety command timed out after {} ms", options.timeout.count()));
        return report;
    }
    report.ok = result->exit_code == 0;
    std::istringstream err(result->err);
    for (std::string line; std::getline(err, line);) {
        if (!line.empty()) report.messages.push_back(line);
    }
    if (!report.ok && report.messages.empty()) {
        report.messages.push_back(fmt::format("safety command exited with status {}", result->exit_code));
    }
    return report;
}

}  // namespace

SafetyReport check(const Program& program, const SafetyOptions& options) {
    if (btparse::has_annotations(program)) throw AnnotationsPresent();
    if (options.mode == Mode::External) return run_external(program, options);
    BuiltinChecker checker(options);
    for (const auto& c : program.clauses) checker.clause(c);
    SafetyReport report;
    report.mode = Mode::Builtin;
    report.messages = std::move(checker.messages);
    report.ok = report.messages.empty();
    return report;
}

}  // namespace nl2bpf::safety
