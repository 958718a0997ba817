#include "doctest.h"
#include "fixtures.hpp"
#include "nl2bpf/btparse.hpp"
#include "nl2bpf/comprehension.hpp"

using namespace nl2bpf;
using namespace nl2bpf::comprehension;
using contracts::ContractStore;

namespace {

ContractStore init_contract() { return ContractStore::load(testing::fixture_path("contracts/tcp_connect_init.json")); }

ContractStore store_from(const char* text) { return ContractStore::from_json(nlohmann::json::parse(text)); }

std::string fenced(const std::string& program) { return "```\n" + program + "```"; }

}  // namespace

TEST_CASE("provenance of the annotated tcp_connect program") {
    const std::string annotated = testing::fixture("programs/tcp_connect_annotated.bt");
    const auto plain = btparse::parse(testing::fixture("programs/tcp_connect.bt"));
    llm::ScriptedBackend llm({fenced(annotated)});
    AnnotatedProgram a = annotate(plain, "trace tcp connects", init_contract(), llm);
    REQUIRE(a.provenance.size() == 9);
    int from_contract = 0;
    for (const auto& t : a.provenance) {
        if (t.provenance == Provenance::Contract) {
            ++from_contract;
            CHECK(t.condition == "$sk != 0");
            CHECK_FALSE(t.is_assert);
            CHECK(t.contract_key == "kretprobe:tcp_connect_init");
            REQUIRE(t.entry);
            CHECK(t.entry->relation == "!=null");
        }
    }
    CHECK(from_contract == 1);
    CHECK(a.provenance[7].is_assert);
    CHECK(a.provenance[7].loc.line == 16);
    CHECK(a.provenance[7].provenance == Provenance::PromptInferred);

    const std::string user = llm.requests()[0].user;
    CHECK(user.find("trace tcp connects") != std::string::npos);
    CHECK(user.find(R"({"kretprobe:tcp_connect_init": {"pre": {"sk": "!=null"}}})") != std::string::npos);
    CHECK(user.find("$sk = (struct sock *)arg0;") != std::string::npos);
}

TEST_CASE("annotation that edits the program is retried once then rejected") {
    const auto plain = btparse::parse(testing::fixture("programs/tcp_connect.bt"));
    const std::string fixed_annotated = testing::fixture("case_study/tcp_connect_fixed_annotated.bt");
    const std::string annotated = testing::fixture("programs/tcp_connect_annotated.bt");

    llm::ScriptedBackend retry({fenced(fixed_annotated), fenced(annotated)});
    AnnotatedProgram a = annotate(plain, "r", init_contract(), retry);
    CHECK(retry.consumed() == 2);
    CHECK(btparse::strip_annotations(a.program) == plain);

    llm::ScriptedBackend twice({fenced(fixed_annotated), fenced(fixed_annotated)});
    CHECK_THROWS_AS(annotate(plain, "r", init_contract(), twice), StructureViolated);
    llm::ScriptedBackend garbage({"```\nkprobe:f { assume(; }\n```", "```\nnope {\n```"});
    CHECK_THROWS_AS(annotate(plain, "r", init_contract(), garbage), AnnotationParseError);
    llm::ScriptedBackend dry({});
    CHECK_THROWS_AS(annotate(plain, "r", init_contract(), dry), llm::LlmError);
}

TEST_CASE("retrieved annotation examples appear in the prompt") {
    auto emb = std::make_shared<examples::HashedBagOfTokens>(64);
    examples::ExampleStore ex(emb);
    ex.add(ex.make_record("e1", "trace tcp connects", "kprobe:x {\n    assume(arg0 != 0);\n}",
                          examples::Outcome::Curated));
    const auto plain = btparse::parse(testing::fixture("programs/tcp_connect.bt"));
    llm::ScriptedBackend llm({fenced(testing::fixture("programs/tcp_connect_annotated.bt"))});
    AnnotateOptions opts;
    opts.example_store = &ex;
    opts.k = 1;
    annotate(plain, "trace tcp connects", init_contract(), llm, opts);
    CHECK(llm.requests()[0].user.find("Annotated example 1\nRequest:\ntrace tcp connects\nAnnotated program:\n```\n"
                                      "kprobe:x {\n    assume(arg0 != 0);\n}\n```") != std::string::npos);
    CHECK(llm.requests()[0].temperature == 0.0);
}

TEST_CASE("direct annotation places assumes after the assignments they need") {
    const auto plain = btparse::parse(testing::fixture("programs/tcp_connect.bt"));
    AnnotatedProgram a = direct_annotate(plain, init_contract());
    const auto& body = a.program.clauses[0].body;
    REQUIRE(body.size() == 7);
    CHECK(std::holds_alternative<ast::Assign>(body[0].node));
    const auto* as = std::get_if<ast::Assume>(&body[1].node);
    REQUIRE(as);
    CHECK(btparse::render(as->cond) == "$sk != 0");
    CHECK(btparse::strip_annotations(a.program) == plain);
    REQUIRE(a.provenance.size() == 1);
    CHECK(a.provenance[0].provenance == Provenance::Contract);
    CHECK(btparse::parse(a.text) == a.program);

    CHECK_THROWS_AS(direct_annotate(a.program, init_contract()), AnnotationsPresent);
}

TEST_CASE("direct annotation maps parameters and return values") {
    auto store = store_from(R"j({"kretprobe:tcp_v4_connect": {
        "pre": {"sk": "!=null", "addr_len": ">= 16", "uaddr": "is valid"},
        "post": {"retval": "<=0"},
        "prototype": "int tcp_v4_connect(struct sock *sk, struct sockaddr *uaddr, int addr_len)"}})j");
    auto ret = btparse::parse("kretprobe:tcp_v4_connect\n{\n    printf(\"%d\\n\", retval);\n}\n");
    AnnotatedProgram a = direct_annotate(ret, store);
    // Entries keep the store's sorted key order: addr_len before sk.
    CHECK(a.text ==
          "kretprobe:tcp_v4_connect {\n"
          "    assume(arg2 >= 16);\n"
          "    assume(arg0 != 0);\n"
          "    printf(\"%d\\n\", retval);\n"
          "    assert(retval <= 0);\n"
          "}\n");
    REQUIRE(a.provenance.size() == 3);
    for (const auto& t : a.provenance) CHECK(t.provenance == Provenance::Contract);
    CHECK(a.provenance[2].is_assert);

    // Entry probes get no post-condition asserts.
    auto entry = btparse::parse("kprobe:tcp_v4_connect\n{\n    printf(\"hi\\n\");\n}\n");
    AnnotatedProgram e = direct_annotate(entry, store);
    CHECK(btparse::count_annotations(e.program) == 2);
    for (const auto& t : e.provenance) CHECK_FALSE(t.is_assert);

    // No matching contract: nothing to add.
    auto other = btparse::parse("kprobe:vfs_read { printf(\"r\\n\"); }");
    CHECK(btparse::count_annotations(direct_annotate(other, store).program) == 0);
}

TEST_CASE("condition_expr subject mapping") {
    auto store = store_from(R"j({"kprobe:f": {"prototype": "int f(struct sock *sk, int n)"}})j");
    const auto& c = store.entries.at("kprobe:f");
    auto clause = btparse::parse("kprobe:f { $sk = (struct sock *)arg0; }").clauses[0];
    auto bare = btparse::parse("kprobe:f { }").clauses[0];
    auto render = [](const std::optional<ast::Expr>& e) { return e ? btparse::render(*e) : std::string("-"); };
    CHECK(render(condition_expr({"sk->__sk_common.skc_num", "> 0"}, clause, c)) == "$sk->__sk_common.skc_num > 0");
    CHECK(render(condition_expr({"sk", "!=null"}, bare, c)) == "arg0 != 0");
    CHECK(render(condition_expr({"n", "<0x10"}, bare, c)) == "arg1 < 16");
    CHECK(render(condition_expr({"retval", ">=-1"}, bare, c)) == "retval >= -1");
    CHECK(render(condition_expr({"pid", "!= 0"}, bare, c)) == "pid != 0");
    CHECK(render(condition_expr({"mystery", "== 1"}, bare, c)) == "-");
    CHECK(render(condition_expr({"n", "is small"}, bare, c)) == "-");
}

TEST_CASE("provenance uses each contract entry once") {
    auto store = store_from(R"j({"kprobe:f": {"pre": {"arg0": "!=null"}}})j");
    auto p = btparse::parse("kprobe:f {\n    assume(arg0 != 0);\n    assume(arg0 != 0);\n    assert(arg0 != 0);\n}\n");
    auto tags = assign_provenance(p, store);
    REQUIRE(tags.size() == 3);
    CHECK(tags[0].provenance == Provenance::Contract);
    CHECK(tags[1].provenance == Provenance::PromptInferred);
    CHECK(tags[2].provenance == Provenance::PromptInferred);
    CHECK(to_string(Provenance::PromptInferred) == "prompt_inferred");
}
