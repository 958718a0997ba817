#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "nl2bpf/btparse.hpp"
#include "program_gen.hpp"

using namespace nl2bpf;
using namespace nl2bpf::ast;

namespace {

std::string read_fixture(const std::string& name) {
    std::ifstream in(std::string(NL2BPF_FIXTURES) + "/" + name);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Reference filter: drop Assume/Assert at every depth, keep the rest.
std::vector<Stmt> drop_annotations(const std::vector<Stmt>& body) {
    std::vector<Stmt> out;
    for (const Stmt& s : body) {
        if (std::holds_alternative<Assume>(s.node) || std::holds_alternative<Assert>(s.node)) continue;
        Stmt copy = s;
        if (auto* i = std::get_if<If>(&copy.node)) {
            i->then_body = drop_annotations(i->then_body);
            i->else_body = drop_annotations(i->else_body);
        } else if (auto* u = std::get_if<Unroll>(&copy.node)) {
            u->body = drop_annotations(u->body);
        }
        out.push_back(std::move(copy));
    }
    return out;
}

std::size_t count_kind(const std::vector<Stmt>& body, bool annotations) {
    std::size_t n = 0;
    for (const Stmt& s : body) {
        const bool is_ann = std::holds_alternative<Assume>(s.node) || std::holds_alternative<Assert>(s.node);
        if (is_ann == annotations) ++n;
        if (const auto* i = std::get_if<If>(&s.node)) {
            n += count_kind(i->then_body, annotations) + count_kind(i->else_body, annotations);
        } else if (const auto* u = std::get_if<Unroll>(&s.node)) {
            n += count_kind(u->body, annotations);
        }
    }
    return n;
}

const char* kSamples[] = {"programs/kill_signals.bt", "programs/tcp_connect.bt", "programs/tcp_connect_annotated.bt",
                          "programs/tcp_connect_fixed.bt"};

}  // namespace

TEST_CASE("sample programs round-trip") {
    for (const char* name : kSamples) {
        INFO(name);
        Program p = btparse::parse(read_fixture(name));
        const std::string text = btparse::render(p);
        Program again = btparse::parse(text);
        CHECK(again == p);
        CHECK(btparse::render(again) == text);
    }
}

TEST_CASE("kill tracer structure") {
    Program p = btparse::parse(read_fixture("programs/kill_signals.bt"));
    REQUIRE(p.clauses.size() == 2);
    auto probes = btparse::extract_probes(p);
    REQUIRE(probes.size() == 2);
    CHECK(to_string(probes[0]) == "tracepoint:syscalls:sys_enter_kill");
    CHECK(to_string(probes[1]) == "tracepoint:syscalls:sys_exit_kill");
    REQUIRE(p.clauses[1].predicate.has_value());
    CHECK(std::holds_alternative<MapAccess>(p.clauses[1].predicate->node));
    CHECK(p.clauses[1].body.size() == 4);
}

TEST_CASE("tcp_connect field chains") {
    Program p = btparse::parse(read_fixture("programs/tcp_connect.bt"));
    REQUIRE(p.clauses.size() == 1);
    const auto& body = p.clauses[0].body;
    REQUIRE(body.size() == 6);
    const auto& dport = std::get<Assign>(body[4].node);
    CHECK(dport.var == "dport");
    const auto& chain = std::get<FieldChain>(dport.value.node);
    CHECK(std::get<ScratchVar>(chain.base->node).name == "sk");
    REQUIRE(chain.fields.size() == 2);
    CHECK(chain.fields[0].name == "__sk_common");
    CHECK(chain.fields[0].arrow);
    CHECK(chain.fields[1].name == "skc_dport");
    CHECK_FALSE(chain.fields[1].arrow);
    const auto& cast = std::get<Cast>(std::get<Assign>(body[0].node).value.node);
    CHECK(cast.type_name == "struct sock *");
}

TEST_CASE("annotations in the tcp_connect program") {
    Program p = btparse::parse(read_fixture("programs/tcp_connect_annotated.bt"));
    CHECK(btparse::count_annotations(p) == 9);
    CHECK(btparse::has_annotations(p));
    Program stripped = btparse::strip_annotations(p);
    CHECK_FALSE(btparse::has_annotations(stripped));
    CHECK(stripped == btparse::parse(read_fixture("programs/tcp_connect.bt")));
}

TEST_CASE("generated programs round-trip and strip exactly the annotations") {
    std::mt19937_64 rng(20240611);
    for (int i = 0; i < 300; ++i) {
        Program p = testing::random_syntax_program(rng);
        const std::string text = btparse::render(p);
        INFO("program " << i << ":\n" << text);
        Program parsed;
        REQUIRE_NOTHROW(parsed = btparse::parse(text));
        CHECK(parsed == p);

        Program stripped = btparse::strip_annotations(parsed);
        std::size_t others = 0;
        for (std::size_t c = 0; c < parsed.clauses.size(); ++c) {
            CHECK(stripped.clauses[c].body == drop_annotations(parsed.clauses[c].body));
            CHECK(count_kind(stripped.clauses[c].body, true) == 0);
            CHECK(count_kind(stripped.clauses[c].body, false) == count_kind(parsed.clauses[c].body, false));
            others += count_kind(parsed.clauses[c].body, true);
            CHECK(stripped.clauses[c].attach_points == parsed.clauses[c].attach_points);
            CHECK(stripped.clauses[c].predicate == parsed.clauses[c].predicate);
        }
        CHECK(btparse::count_annotations(parsed) == others);
    }
}

TEST_CASE("source locations") {
    Program p = btparse::parse("kprobe:f\n{\n    $x = 1;\n    assert($x == 2);\n}\n");
    const Stmt& s = p.clauses[0].body[1];
    CHECK(s.loc.line == 4);
    CHECK(s.loc.column == 5);
}

TEST_CASE("parse errors carry positions") {
    try {
        btparse::parse("kprobe:f {\n  $x = ;\n}");
        FAIL("expected ParseError");
    } catch (const btparse::ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.column() == 8);
    }
    CHECK_THROWS_AS(btparse::parse("   \n// nothing\n"), btparse::EmptyProgram);
    CHECK_THROWS_AS(btparse::parse("kprobe:f { system(\"ls\"); }"), btparse::ParseError);
    CHECK_THROWS_AS(btparse::parse("kprobe:f { $x = 1 } extra"), btparse::ParseError);
    CHECK_THROWS_AS(btparse::parse("bogus:f { }"), btparse::ParseError);
    CHECK_THROWS_AS(btparse::parse("kprobe:f { unroll($n) { } }"), btparse::ParseError);
}

TEST_CASE("predicate with division and comparison") {
    Program p = btparse::parse("kprobe:f /arg0 / 2 > 3/ { }");
    REQUIRE(p.clauses[0].predicate);
    CHECK(btparse::render(*p.clauses[0].predicate) == "arg0 / 2 > 3");
}

TEST_CASE("expressions render with minimal parentheses") {
    CHECK(btparse::render(btparse::parse_expression("(1 + 2) * 3")) == "(1 + 2) * 3");
    CHECK(btparse::render(btparse::parse_expression("1 - (2 - 3)")) == "1 - (2 - 3)");
    CHECK(btparse::render(btparse::parse_expression("1 - 2 - 3")) == "1 - 2 - 3");
    CHECK(btparse::render(btparse::parse_expression("args->pid")) == "args.pid");
    CHECK(btparse::render(btparse::parse_expression("0x1F")) == "0x1f");
}
