#include "doctest.h"
#include "fixtures.hpp"
#include "nl2bpf/btparse.hpp"
#include "nl2bpf/contracts.hpp"

using namespace nl2bpf;
using namespace nl2bpf::contracts;
using nl2bpf::testing::fixture;
using nl2bpf::testing::fixture_path;

namespace {

ast::ProbeSpec probe(const std::string& text) {
    return btparse::parse(text + " { }").clauses.at(0).attach_points.at(0);
}

std::vector<std::string> keys(const std::vector<const Contract*>& cs) {
    std::vector<std::string> out;
    for (const Contract* c : cs) out.push_back(c->probe_key);
    return out;
}

ContractStore store_of(std::initializer_list<const char*> keys) {
    ContractStore s;
    for (const char* k : keys) s.put(Contract{k, {{"sk", "!=null"}}, {}, "", ""});
    return s;
}

}  // namespace

TEST_CASE("tcp_connect_init contract file round-trips byte for byte") {
    const std::string text = fixture("contracts/tcp_connect_init.json");
    ContractStore s = ContractStore::load(fixture_path("contracts/tcp_connect_init.json"));
    REQUIRE(s.size() == 1);
    const Contract& c = s.entries.at("kretprobe:tcp_connect_init");
    CHECK(c.target() == "tcp_connect_init");
    REQUIRE(c.pre.size() == 1);
    CHECK(c.pre[0] == ConditionEntry{"sk", "!=null"});
    CHECK(c.post.empty());
    CHECK(c.checkable());
    CHECK(s.dump() == text);
}

TEST_CASE("prefix lookup finds the init contract for tcp_connect") {
    ContractStore s = ContractStore::load(fixture_path("contracts/tcp_connect_init.json"));
    CHECK(keys(lookup(s, probe("kprobe:tcp_connect"))) == std::vector<std::string>{"kretprobe:tcp_connect_init"});
    CHECK(lookup(s, probe("kprobe:udp_sendmsg")).empty());
}

TEST_CASE("lookup: exact match wins, otherwise longest common prefix") {
    ContractStore s = store_of({"kprobe:tcp_connect", "kretprobe:tcp_connect_init", "kprobe:tcp_conn",
                                "kprobe:tcp_v4_connect"});
    CHECK(keys(lookup(s, probe("kprobe:tcp_connect"))) == std::vector<std::string>{"kprobe:tcp_connect"});
    // Targets related by prefix to tcp_connect_in: tcp_connect, tcp_connect_init, tcp_conn.
    // Common prefix with "kprobe:tcp_connect_in": kprobe:tcp_connect (18), kprobe:tcp_conn (15), kretprobe (1).
    CHECK(keys(lookup(s, probe("kprobe:tcp_connect_in"))) ==
          std::vector<std::string>{"kprobe:tcp_connect", "kprobe:tcp_conn", "kretprobe:tcp_connect_init"});
}

TEST_CASE("relation grammar") {
    auto r = parse_relation("!=null");
    REQUIRE(r);
    CHECK(r->op == ast::BinaryOp::Ne);
    CHECK(r->value == 0);
    r = parse_relation(">= 16");
    REQUIRE(r);
    CHECK(r->op == ast::BinaryOp::Ge);
    CHECK(r->value == 16);
    r = parse_relation("<-4");
    REQUIRE(r);
    CHECK(r->op == ast::BinaryOp::Lt);
    CHECK(r->value == -4);
    r = parse_relation("==0x10");
    REQUIRE(r);
    CHECK(r->value == 16);
    CHECK_FALSE(parse_relation("is a valid socket"));
    CHECK_FALSE(parse_relation(">= len"));

    Contract c{"kprobe:f", {{"sk->__sk_common.skc_num", ">0"}}, {}, "", ""};
    CHECK(c.checkable());
    c.pre.push_back({"sk", "must be locked"});
    CHECK_FALSE(c.checkable());
    c.pre.back() = {"sk[0]", "!=null"};
    CHECK_FALSE(c.checkable());
}

TEST_CASE("schema errors") {
    using nlohmann::json;
    CHECK_THROWS_AS(ContractStore::from_json(json::parse(R"({"kprobe:f": {"pre": "x"}})")), SchemaError);
    CHECK_THROWS_AS(ContractStore::from_json(json::parse(R"({"kprobe:f": {"pre": {"sk": 1}}})")), SchemaError);
    CHECK_THROWS_AS(ContractStore::from_json(json::parse(R"({"kprobe:f": {"extra": {}}})")), SchemaError);
    CHECK_THROWS_AS(ContractStore::from_json(json::parse(R"({"notaprobe": {}})")), SchemaError);
    CHECK_THROWS_AS(ContractStore::from_json(json::parse(R"([1, 2])")), SchemaError);
    try {
        ContractStore::from_json(json::parse(R"({"kprobe:f": {"pre": []}})"));
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.key() == "kprobe:f");
    }
    CHECK_THROWS_AS(ContractStore::load(fixture_path("contracts/does_not_exist.json")), IoError);

    // Non-checkable relations survive a round trip.
    auto s = ContractStore::from_json(json::parse(R"({"kprobe:f": {"pre": {"sk": "must be locked"}}})"));
    CHECK(ContractStore::from_json(s.to_json()).entries == s.entries);
}

TEST_CASE("dump_sorted matches python json.dumps(sort_keys=True)") {
    auto j = nlohmann::json::parse(R"({"b": [1, {"z": 1, "a": "x"}], "a": {}})");
    CHECK(dump_sorted(j) == R"({"a": {}, "b": [1, {"a": "x", "z": 1}]})");
}

TEST_CASE("function scanner") {
    const std::string text = fixture("contracts/corpus/net/tcp_output.c");
    auto fns = scan_functions(text, "net/tcp_output.c");
    REQUIRE(fns.size() == 2);
    CHECK(fns[0].name == "tcp_connect_init");
    CHECK(fns[0].prototype == "static void tcp_connect_init(struct sock *sk)");
    CHECK(fns[0].semantics == "Do all connect socket setups that can be done AF independent.");
    CHECK(fns[0].line == 4);
    CHECK(fns[0].source.rfind("static void tcp_connect_init", 0) == 0);
    CHECK(fns[0].source.back() == '}');
    CHECK(fns[1].name == "tcp_transmit_helper");
    CHECK(fns[1].semantics.empty());

    auto v4 = scan_functions(fixture("contracts/corpus/net/tcp_ipv4.c"));
    REQUIRE(v4.size() == 1);
    CHECK(v4[0].name == "tcp_v4_connect");
    CHECK(v4[0].semantics ==
          "tcp_v4_connect - initiate an outgoing connection\n@sk: socket, must not be NULL\n"
          "@uaddr: destination address\nReturns 0 on success or a negative errno.");
}

TEST_CASE("build_dataset over the crafted corpus") {
    nl2bpf::testing::TempDir tmp;
    llm::ScriptedBackend backend(
        nlohmann::json::parse(fixture("contracts/corpus_script.json")).get<std::vector<std::string>>());
    BuildResult r = build_dataset(fixture_path("contracts/corpus"), backend, tmp / "out.json");
    CHECK(r.functions_seen == 3);
    CHECK(r.issues.empty());
    CHECK(backend.remaining() == 0);
    REQUIRE(r.store.size() == 3);

    const Contract& init = r.store.entries.at("kretprobe:tcp_connect_init");
    CHECK(init.semantics == "Do all connect socket setups that can be done AF independent.");
    CHECK(init.pre == std::vector<ConditionEntry>{{"sk", "!=null"}});
    const Contract& v4 = r.store.entries.at("kprobe:tcp_v4_connect");
    CHECK(v4.post == std::vector<ConditionEntry>{{"retval", "<=0"}});
    CHECK(v4.prototype == "int tcp_v4_connect(struct sock *sk, struct sockaddr *uaddr, int addr_len)");
    CHECK(r.store.entries.at("kretprobe:tcp_transmit_helper").semantics.empty());

    auto reqs = backend.requests();
    REQUIRE(reqs.size() == 3);
    CHECK(reqs[0].user.find("tcp_v4_connect") != std::string::npos);
    CHECK(reqs[1].user.find("tcp_connect_init") != std::string::npos);
    CHECK(reqs[2].user.find("(none)") != std::string::npos);
    CHECK(reqs[0].temperature == 0.0);

    ContractStore reloaded = ContractStore::load(tmp / "out.json");
    CHECK(reloaded.entries == r.store.entries);
}

TEST_CASE("malformed replies are recorded, not fatal") {
    nl2bpf::testing::TempDir tmp;
    llm::ScriptedBackend backend(
        nlohmann::json::parse(fixture("contracts/malformed_script.json")).get<std::vector<std::string>>());
    BuildResult r = build_dataset(fixture_path("contracts/corpus_malformed"), backend, tmp / "out.json");
    REQUIRE(r.issues.size() == 1);
    CHECK(r.issues[0].kind == "MalformedResponse");
    CHECK(r.issues[0].function == "tcp_connect_init");
    CHECK(r.store.size() == 1);
    CHECK(r.store.entries.count("kprobe:tcp_transmit_helper") == 1);
}
