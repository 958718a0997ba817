#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nl2bpf/btparse.hpp"
#include "nl2bpf/symexec/symexec.hpp"

using namespace nl2bpf;
using namespace nl2bpf::symexec;

namespace {

std::string read_fixture(const std::string& name) {
    std::ifstream in(std::string(NL2BPF_FIXTURES) + "/" + name);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict run(const std::string& source, const KernelTypeMap& types = KernelTypeMap::defaults()) {
    return verify(btparse::parse(source), types);
}

uint16_t swap16(uint16_t v) { return static_cast<uint16_t>((v << 8) | (v >> 8)); }

// The fixed program with the annotated program's assumes and asserts.
std::string annotate_like_sample(const std::string& fixed) {
    std::string annotated = read_fixture("programs/tcp_connect_annotated.bt");
    std::string assumes = annotated.substr(annotated.find("    assume"), annotated.find("    $saddr") - annotated.find("    assume"));
    std::string asserts = annotated.substr(annotated.find("    assert"));
    asserts = asserts.substr(0, asserts.find('}'));
    std::string out = fixed;
    out.insert(out.find("    $saddr"), assumes);
    out.insert(out.rfind('}'), asserts);
    return out;
}

}  // namespace

TEST_CASE("annotated tcp_connect violates the byte-order assert") {
    Verdict v = run(read_fixture("programs/tcp_connect_annotated.bt"));
    REQUIRE(std::holds_alternative<AssertViolation>(v));
    const auto& av = std::get<AssertViolation>(v);
    CHECK(av.loc.line == 16);
    CHECK(av.message.find("assert($dport == bswap($sk->__sk_common.skc_dport))") != std::string::npos);
    auto it = av.counterexample.find("arg0->__sk_common.skc_dport");
    REQUIRE(it != av.counterexample.end());
    CHECK(it->second.width == 16);
    const auto d = static_cast<uint16_t>(it->second.value);
    CHECK(d != swap16(d));
    CHECK(av.counterexample.at("arg0").value != 0);
}

TEST_CASE("fixed tcp_connect under the same annotations verifies") {
    const std::string src = annotate_like_sample(read_fixture("programs/tcp_connect_fixed.bt"));
    CHECK(btparse::count_annotations(btparse::parse(src)) == 9);
    CHECK(std::holds_alternative<Verified>(run(src)));
}

TEST_CASE("trivial verdicts") {
    CHECK(std::holds_alternative<Verified>(run("kprobe:f { assume(1 == 0); assert(0 == 1); }")));
    CHECK(std::holds_alternative<Verified>(run("kprobe:f { assert($x == $x); }")));
    CHECK(std::holds_alternative<Verified>(run(read_fixture("programs/tcp_connect.bt"))));
    CHECK(std::holds_alternative<Verified>(run(read_fixture("programs/kill_signals.bt"))));
    CHECK(std::holds_alternative<AssertViolation>(run("kprobe:f { assert(arg0 == 1); }")));
}

TEST_CASE("bswap and sizeof evaluation") {
    TermFactory f;
    SymState st;
    const auto types = KernelTypeMap::defaults();
    SymValue v = eval_expr(f, st, btparse::parse_expression("bswap((uint16)0x1234)"), types);
    REQUIRE(v.kind() == SymValue::Kind::Concrete);
    CHECK(v.term->value == 0x3412);
    CHECK(v.width() == 16);

    SymValue size = eval_expr(f, st, btparse::parse_expression("sizeof(arg0->__sk_common.skc_rcv_saddr)"), types);
    REQUIRE(size.kind() == SymValue::Kind::Concrete);
    CHECK(size.term->value == 4);

    SymValue field = eval_expr(f, st, btparse::parse_expression("arg0->__sk_common.skc_dport"), types);
    CHECK(field.kind() == SymValue::Kind::Symbolic);
    CHECK(field.width() == 16);
    CHECK(st.field_model.contains("arg0->__sk_common.skc_dport"));

    SymValue ip = eval_expr(f, st, btparse::parse_expression("ntop(2, arg0->__sk_common.skc_daddr)"), types);
    CHECK(ip.kind() == SymValue::Kind::Uninterpreted);

    SymValue unknown = eval_expr(f, st, btparse::parse_expression("arg1->whatever"), types);
    CHECK(unknown.width() == 64);
}

TEST_CASE("if forks paths and each is checked") {
    const char* src = R"(kprobe:f {
    $x = arg0;
    if ($x > 10) {
        $y = 1;
    } else {
        $y = 2;
    }
    assert($y == 1 || $x <= 10);
    assert($y == 1);
})";
    Verdict v = run(src);
    REQUIRE(std::holds_alternative<AssertViolation>(v));
    const auto& av = std::get<AssertViolation>(v);
    CHECK(av.loc.line == 9);
    CHECK(av.counterexample.at("arg0").value <= 10);
}

TEST_CASE("unroll repeats the body") {
    CHECK(std::holds_alternative<Verified>(run("kprobe:f { $i = 0; unroll(4) { $i = $i + 1; } assert($i == 4); }")));
    CHECK(std::holds_alternative<AssertViolation>(
        run("kprobe:f { $i = 0; unroll(3) { $i = $i + 1; } assert($i == 4); }")));
}

TEST_CASE("symbolic divisor raises an implicit goal") {
    Verdict v = run("kprobe:f { $x = 100 / arg1; }");
    REQUIRE(std::holds_alternative<AssertViolation>(v));
    CHECK(std::get<AssertViolation>(v).message.find("division by zero") != std::string::npos);
    CHECK(std::get<AssertViolation>(v).counterexample.at("arg1").value == 0);
    CHECK(std::holds_alternative<Verified>(run("kprobe:f { assume(arg1 != 0); $x = 100 / arg1; }")));
    CHECK(std::holds_alternative<Verified>(run("kprobe:f { $x = arg1 != 0 && 100 / arg1 > 2; }")));
    CHECK(std::holds_alternative<Verified>(run("kprobe:f { $x = 100 / 7; }")));
}

TEST_CASE("maps read back their writes") {
    CHECK(std::holds_alternative<Verified>(run("kprobe:f { @m[tid] = 5; assert(@m[tid] == 5); }")));
    CHECK(std::holds_alternative<AssertViolation>(run("kprobe:f { @m[tid] = 5; assert(@m[pid] == 5); }")));
    CHECK(std::holds_alternative<Verified>(
        run("kprobe:f { @m[tid] = 5; assume(pid == tid); assert(@m[pid] == 5); }")));
    CHECK(std::holds_alternative<Verified>(run("kprobe:f { @m[tid] = 5; delete(@m[tid]); assert(@m[tid] == 0); }")));
}

TEST_CASE("predicates restrict the path") {
    CHECK(std::holds_alternative<Verified>(run("kprobe:f /arg0 == 3/ { assert(arg0 > 2); }")));
    CHECK(std::holds_alternative<AssertViolation>(run("kprobe:f /arg0 >= 2/ { assert(arg0 > 2); }")));
}

TEST_CASE("first violation follows clause order") {
    Verdict v = run("kprobe:a { assert(arg0 == 0); }\nkprobe:b { assert(arg1 == 0); }");
    REQUIRE(std::holds_alternative<AssertViolation>(v));
    CHECK(std::get<AssertViolation>(v).loc.line == 1);
}

TEST_CASE("fork cap returns timeout") {
    std::string body;
    for (int i = 0; i < 7; ++i) body += "if (arg" + std::to_string(i) + " > 1) { $x = 1; }\n";
    Verdict v = run("kprobe:f {\n" + body + "assert(1);\n}");
    REQUIRE(std::holds_alternative<Timeout>(v));
    CHECK(std::get<Timeout>(v).message.find("path limit") != std::string::npos);

    VerifyOptions wide;
    wide.fork_cap = 128;
    CHECK(std::holds_alternative<Verified>(verify(btparse::parse("kprobe:f {\n" + body + "assert(1);\n}"),
                                                  KernelTypeMap::defaults(), wide)));
}

TEST_CASE("zero budget times out with elapsed at least the budget") {
    VerifyOptions opts;
    opts.budget = std::chrono::milliseconds(0);
    Verdict v = verify(btparse::parse("kprobe:f { assert(arg0 == 1); }"), KernelTypeMap::defaults(), opts);
    REQUIRE(std::holds_alternative<Timeout>(v));
    CHECK(std::get<Timeout>(v).elapsed >= opts.budget);
}

TEST_CASE("stripped programs always verify") {
    ast::Program p = btparse::strip_annotations(btparse::parse(read_fixture("programs/tcp_connect_annotated.bt")));
    CHECK(std::holds_alternative<Verified>(verify(p, KernelTypeMap::defaults())));
}

TEST_CASE("kernel type map json") {
    auto m = KernelTypeMap::from_json(nlohmann::json::parse(R"({"a.b": "int8", "c": {"width": 32, "signed": true}})"));
    CHECK(m.lookup("a.b") == FieldType{8, true});
    CHECK(m.lookup("x.c") == FieldType{32, true});
    CHECK(m.lookup("zzz") == FieldType{64, false});
    CHECK(KernelTypeMap::from_json(m.to_json()).to_json() == m.to_json());
    CHECK_THROWS(KernelTypeMap::from_json(nlohmann::json::parse(R"({"a": "uint12"})")));
    CHECK(KernelTypeMap::defaults().lookup("skc_dport") == FieldType{16, false});
}

TEST_CASE("verdict json") {
    auto j = to_json(run(read_fixture("programs/tcp_connect_annotated.bt")));
    CHECK(j["verdict"] == "assert_violation");
    CHECK(j["line"] == 16);
    CHECK(j["counterexample"].contains("arg0->__sk_common.skc_dport"));
}
