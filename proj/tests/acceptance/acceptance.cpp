// One PASS/FAIL line per acceptance criterion; exit status 1 if any fail.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>

#include <fmt/format.h>

#include "concrete.hpp"
#include "fixtures.hpp"
#include "nl2bpf/btparse.hpp"
#include "nl2bpf/config.hpp"
#include "nl2bpf/contracts.hpp"
#include "nl2bpf/eval.hpp"
#include "nl2bpf/orchestrator.hpp"
#include "nl2bpf/symexec/solver.hpp"
#include "nl2bpf/symexec/symexec.hpp"
#include "nl2bpf/util/process.hpp"
#include "program_gen.hpp"

using namespace nl2bpf;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fenced(const std::string& program) { return "```\n" + program + "```"; }

const char* kBswapAssert = "assert($dport == bswap($sk->__sk_common.skc_dport))";

Outcome case_study() {
    Outcome o;
    const auto t0 = Clock::now();
    config::Runtime rt(config::CliConfig::load(testing::fixture_path("case_study/config.json")));
    auto r = orchestrator::run_session(testing::fixture("case_study/prompt.txt"), rt.session_config());
    const double took = seconds_since(t0);
    o.require(r.trial_count == 2, fmt::format("{} trials", r.trial_count));
    o.require(r.trials.size() == 2, "trial records missing");
    if (!o.ok) return o;
    const auto& first = r.trials[0];
    const auto* av = first.verdict ? std::get_if<symexec::AssertViolation>(&*first.verdict) : nullptr;
    o.require(av != nullptr, "first candidate did not violate an assert");
    if (av) o.require(av->message.find(kBswapAssert) != std::string::npos, "violation names another assert");
    const auto& second = r.trials[1];
    o.require(second.verdict && std::holds_alternative<symexec::Verified>(*second.verdict),
              "second candidate not verified");
    o.require(second.safety && second.safety->ok, "second candidate failed the safety check");
    o.require(r.status == orchestrator::Status::Success, "session did not succeed");
    o.require(took < 30, fmt::format("took {:.1f}s", took));
    if (o.ok) o.detail = fmt::format("2 trials, bswap assert caught then verified, {:.2f}s", took);
    return o;
}

Outcome oracle_equivalence() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1);
    symexec::KernelTypeMap types;
    for (const char* n : {"args.a", "args.b", "args.c"}) types.set(n, {8, false});
    int agree = 0, violations = 0;
    const int total = 220;
    for (int i = 0; i < total; ++i) {
        testing::OracleProgramShape shape;
        const double pick = std::uniform_real_distribution<>(0, 1)(rng);
        shape.symbols = pick < 0.3 ? 1 : pick < 0.92 ? 2 : 3;
        shape.statements = std::uniform_int_distribution<int>(3, 8)(rng);
        const auto program = btparse::parse(btparse::render(testing::random_oracle_program(rng, shape)));
        std::vector<std::string> inputs;
        for (int k = 0; k < shape.symbols; ++k) inputs.push_back(std::string("args.") + char('a' + k));

        const auto verdict = symexec::verify(program, types);
        testing::ConcreteClause oracle(program.clauses[0], inputs);
        const bool oracle_bad = oracle.find_violation();
        const auto* av = std::get_if<symexec::AssertViolation>(&verdict);
        bool same = (av != nullptr) == oracle_bad && (av || std::holds_alternative<symexec::Verified>(verdict));
        if (av) {
            std::vector<uint64_t> values;
            for (const auto& n : inputs) {
                auto it = av->counterexample.find(n);
                values.push_back(it == av->counterexample.end() ? 0 : static_cast<uint64_t>(it->second.value));
            }
            const auto replay = oracle.run(values);
            same = same && replay.result == testing::ConcreteClause::Result::Violated &&
                   replay.assert_loc.line == av->loc.line && replay.assert_loc.column == av->loc.column;
        }
        agree += same;
        violations += oracle_bad;
        if (!same && o.ok) {
            o.ok = false;
            o.detail = fmt::format("program {} disagrees: {}\n{}", i, symexec::describe(verdict),
                                   btparse::render(program));
        }
    }
    const double took = seconds_since(t0);
    o.require(took < 120, fmt::format("took {:.1f}s", took));
    if (o.ok) o.detail = fmt::format("{}/{} agree ({} with violations), {:.1f}s", agree, total, violations, took);
    return o;
}

Outcome bswap_identity() {
    Outcome o;
    using namespace symexec;
    o.require(byte_swap(0x1234, 16) == 0x3412, "bswap(0x1234, 16) != 0x3412");
    const auto deadline = Clock::now() + std::chrono::seconds(30);
    std::unique_ptr<Solver> z3;
    std::string z3_path;
    if (const char* env = std::getenv("NL2BPF_Z3"); env && *env) z3_path = env;
    else z3_path = util::find_executable("z3").value_or("");
    if (!z3_path.empty()) z3 = make_solver("smtlib", z3_path);
    for (unsigned width : {16u, 32u, 64u}) {
        TermFactory f;
        TermRef x = f.symbol("x", width);
        TermRef negated[] = {f.bool_not(f.eq(f.make(Op::Bswap, {f.make(Op::Bswap, {x})}), x))};
        BitBlastSolver bb;
        o.require(bb.check(f, negated, deadline).result == SatResult::Unsat,
                  fmt::format("bit-blaster: double bswap not identity at {}", width));
        if (z3) {
            o.require(z3->check(f, negated, deadline).result == SatResult::Unsat,
                      fmt::format("z3: double bswap not identity at {}", width));
        }
    }
    if (o.ok) o.detail = z3 ? "unsat at 16/32/64 (bit-blaster and z3)" : "unsat at 16/32/64 (bit-blaster; z3 not found)";
    return o;
}

Outcome eval_metrics() {
    Outcome o;
    struct Row {
        std::size_t a, fp, fn;
        const char *acc, *fpr, *fnr;
        const char* name;
    } rows[] = {{32, 1, 7, "0.800", "0.025", "0.175", "nl2bpf_run"},
                {12, 1, 27, "0.300", "0.025", "0.675", "baseline_run"}};
    for (const auto& r : rows) {
        const auto m = eval::compute_metrics(r.a, r.fp, r.fn);
        o.require(m.accuracy.decimal() == r.acc && m.fp.decimal() == r.fpr && m.fn.decimal() == r.fnr,
                  fmt::format("counts {}/{}/{} gave {}, {}, {}", r.a, r.fp, r.fn, m.accuracy.decimal(),
                              m.fp.decimal(), m.fn.decimal()));

        auto script = nlohmann::json::parse(testing::fixture(std::string("eval/") + r.name + "_script.json"));
        const auto cases = eval::load_dataset(testing::fixture_path(std::string("eval/") + r.name + ".jsonl"));
        const auto report = eval::run_eval(cases, [&](const eval::EvalCase& c, int) {
            eval::CaseSession s;
            auto backend = std::make_shared<llm::ScriptedBackend>(
                script.at(c.id).at("synthesis").get<std::vector<std::string>>());
            s.owned.push_back(backend);
            s.config.synthesis_llm = backend.get();
            return s;
        });
        const auto& mm = report.metrics;
        o.require(mm.accurate == r.a && mm.false_positives == r.fp && mm.false_negatives == r.fn,
                  fmt::format("{} run classified {}/{}/{}", r.name, mm.accurate, mm.false_positives,
                              mm.false_negatives));
        o.require(mm.accuracy.decimal() == r.acc && mm.fp.decimal() == r.fpr && mm.fn.decimal() == r.fnr,
                  fmt::format("{} run rates differ", r.name));
    }
    if (o.ok) o.detail = "(0.800, 0.025, 0.175) and (0.300, 0.025, 0.675)";
    return o;
}

Outcome contract_round_trip() {
    Outcome o;
    const std::string text = testing::fixture("contracts/tcp_connect_init.json");
    const auto store = contracts::ContractStore::load(testing::fixture_path("contracts/tcp_connect_init.json"));
    o.require(store.dump() == text, "dump differs from the file");
    const auto probe = btparse::parse("kprobe:tcp_connect { }").clauses[0].attach_points[0];
    const auto found = contracts::lookup(store, probe);
    o.require(found.size() == 1 && found[0]->probe_key == "kretprobe:tcp_connect_init",
              "lookup for kprobe:tcp_connect missed the init contract");
    if (o.ok) o.detail = "byte-identical; kprobe:tcp_connect -> kretprobe:tcp_connect_init";
    return o;
}

std::size_t count_annotations_in(const std::vector<ast::Stmt>& body) {
    std::size_t n = 0;
    for (const auto& s : body) {
        if (std::holds_alternative<ast::Assume>(s.node) || std::holds_alternative<ast::Assert>(s.node)) ++n;
        if (const auto* i = std::get_if<ast::If>(&s.node)) {
            n += count_annotations_in(i->then_body) + count_annotations_in(i->else_body);
        } else if (const auto* u = std::get_if<ast::Unroll>(&s.node)) {
            n += count_annotations_in(u->body);
        }
    }
    return n;
}

Outcome parser_properties() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240611);
    int checked = 0;
    for (const char* f : {"programs/kill_signals.bt", "programs/tcp_connect.bt", "programs/tcp_connect_annotated.bt",
                          "programs/tcp_connect_fixed.bt"}) {
        const auto p = btparse::parse(testing::fixture(f));
        o.require(btparse::parse(btparse::render(p)) == p, std::string("round trip failed for ") + f);
    }
    for (int i = 0; i < 500; ++i) {
        const auto p = testing::random_syntax_program(rng);
        const std::string text = btparse::render(p);
        ast::Program parsed;
        try {
            parsed = btparse::parse(text);
        } catch (const std::exception& e) {
            o.require(false, fmt::format("program {} does not parse: {}", i, e.what()));
            break;
        }
        o.require(parsed == p, fmt::format("program {} changed in a round trip", i));
        const auto stripped = btparse::strip_annotations(parsed);
        o.require(!btparse::has_annotations(stripped), fmt::format("program {} kept annotations", i));
        std::size_t ann = 0;
        for (const auto& c : parsed.clauses) ann += count_annotations_in(c.body);
        o.require(btparse::count_annotations(parsed) == ann, fmt::format("program {} annotation count", i));
        o.require(btparse::strip_annotations(stripped) == stripped, fmt::format("program {} strip not idempotent", i));
        ++checked;
    }
    const double took = seconds_since(t0);
    o.require(took < 10, fmt::format("took {:.1f}s", took));
    if (o.ok) o.detail = fmt::format("{} generated programs and 4 samples, {:.2f}s", checked, took);
    return o;
}

Outcome feedback_order() {
    Outcome o;
    llm::ScriptedBackend synth({fenced("kprobe:f1 { printf(\"a\\n\"); }\n"), fenced("kprobe:f2 { printf(\"b\\n\"); }\n"),
                                fenced("kprobe:f3 { printf(\"c\\n\"); }\n")});
    orchestrator::SessionConfig cfg;
    cfg.synthesis_llm = &synth;
    cfg.verify_hook = [](const comprehension::AnnotatedProgram&, int trial) -> symexec::Verdict {
        if (trial == 1) return symexec::AssertViolation{{1, 1}, {}, "failure1"};
        return symexec::Verified{};
    };
    cfg.safety_hook = [](const ast::Program&, int trial) {
        safety::SafetyReport r;
        if (trial == 2) {
            r.ok = false;
            r.messages = {"failure2"};
        }
        return r;
    };
    const auto r = orchestrator::run_session("trace f", cfg);
    o.require(r.trials.size() == 3, fmt::format("{} trials", r.trials.size()));
    if (!o.ok) return o;
    const std::string& prompt = r.trials[2].prompt;
    const auto a = prompt.find("failure1"), b = prompt.find("failure2");
    o.require(a != std::string::npos && b != std::string::npos, "third prompt lacks a failure message");
    o.require(a < b, "failure messages out of order");
    if (o.ok) o.detail = "third prompt carries failure1 (symexec) before failure2 (safety_gate)";
    return o;
}

Outcome deterministic_eval() {
    Outcome o;
    const std::string seed_before = testing::fixture("examples/seed.jsonl");
    testing::TempDir tmp;
    std::string reports[2];
    for (int run = 0; run < 2; ++run) {
        const auto path = tmp / fmt::format("report{}.json", run);
        const auto result = util::run_process(
            {NL2BPF_CLI, "--config", testing::fixture_path("eval/config.json").string(), "eval",
             testing::fixture_path("eval/nl2bpf_run.jsonl").string(), "--cases-script",
             testing::fixture_path("eval/nl2bpf_run_script.json").string(), "--workers", run == 0 ? "1" : "3",
             "--report", path.string()},
            "", std::chrono::seconds(60));
        o.require(result && result->exit_code == 0,
                  "eval run failed: " + (result ? result->err : std::string("cannot start cli")));
        if (!o.ok) return o;
        reports[run] = testing::slurp(path);
    }
    o.require(!reports[0].empty() && reports[0] == reports[1], "reports differ");
    o.require(testing::fixture("examples/seed.jsonl") == seed_before, "frozen example store changed");
    if (o.ok) o.detail = fmt::format("two runs, {} identical bytes, store untouched", reports[0].size());
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    } criteria[] = {
        {"case study converges in two trials", case_study},
        {"symbolic verdicts match brute force on 8-bit programs", oracle_equivalence},
        {"bswap constant and double-swap identity", bswap_identity},
        {"evaluation rates from outcome counts", eval_metrics},
        {"contract file round-trip and prefix lookup", contract_round_trip},
        {"parser round-trip and strip properties", parser_properties},
        {"feedback from every stage reaches the next prompt", feedback_order},
        {"frozen-store evaluation is reproducible", deterministic_eval},
    };
    int failed = 0;
    int index = 0;
    for (const auto& c : criteria) {
        ++index;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %d %s: %s\n", o.ok ? "PASS" : "FAIL", index, c.name, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.ok;
    }
    return failed == 0 ? 0 : 1;
}
