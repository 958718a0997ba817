#include "doctest.h"
#include "fixtures.hpp"
#include "nl2bpf/btparse.hpp"
#include "nl2bpf/synthesis.hpp"

using namespace nl2bpf;
using namespace nl2bpf::synthesis;

TEST_CASE("rendered prompt keeps request, examples and feedback in order") {
    SynthesisPrompt p;
    p.system = "sys";
    p.user_request = "count kills";
    p.examples = {{"trace opens", "kprobe:do_sys_open { }"}, {"trace reads", "kprobe:vfs_read { }\n"}};
    p.feedback = {{Stage::Symexec, "failure1", 1}, {Stage::SafetyGate, "failure2", 2}};
    const std::string u = p.render_user();
    CHECK(u ==
          "Request:\ncount kills\n"
          "\nExample 1 (correct input -> output)\nInput:\ntrace opens\nOutput:\n```\nkprobe:do_sys_open { }\n```\n"
          "\nExample 2 (correct input -> output)\nInput:\ntrace reads\nOutput:\n```\nkprobe:vfs_read { }\n```\n"
          "\nEarlier candidates for this request were rejected. Fix every problem below.\n"
          "\nFeedback from trial 1 [symexec]:\nfailure1\n"
          "\nFeedback from trial 2 [safety_gate]:\nfailure2\n");
    CHECK(p.length() == 3 + u.size());
    CHECK(u.find("failure1") < u.find("failure2"));
}

TEST_CASE("prompt length grows with feedback") {
    SynthesisPrompt p;
    p.user_request = "r";
    std::size_t last = p.length();
    for (int i = 1; i <= 5; ++i) {
        p.feedback.push_back({Stage::Parse, "msg " + std::to_string(i), i});
        CHECK(p.length() > last);
        last = p.length();
    }
}

TEST_CASE("build_prompt retrieves k examples and skips failures") {
    auto emb = std::make_shared<examples::HashedBagOfTokens>(128);
    examples::ExampleStore store(emb);
    store.add(store.make_record("a", "count kill signals", "kprobe:a { }", examples::Outcome::Curated));
    store.add(store.make_record("b", "count kill syscalls", "kprobe:b { }", examples::Outcome::Failure));
    store.add(store.make_record("c", "trace disk io", "kprobe:c { }", examples::Outcome::Success));
    auto p = build_prompt("count kill signals", &store, {}, 2);
    REQUIRE(p.examples.size() == 2);
    CHECK(p.examples[0].second == "kprobe:a { }");
    CHECK(p.examples[1].second == "kprobe:c { }");
    CHECK(p.system == default_synthesis_system_prompt());
    CHECK(build_prompt("x", nullptr, {}, 3).examples.empty());
    CHECK(build_prompt("x", &store, {}, 0).examples.empty());
}

TEST_CASE("synthesize extracts and parses the candidate") {
    llm::ScriptedBackend llm({"Here:\n```bpftrace\n" + testing::fixture("programs/tcp_connect.bt") + "```",
                              "```\nkprobe:f { $x = ; }\n```", "no code at all", "```\n```"});
    SynthesisPrompt p = build_prompt("r", nullptr, {}, 0);
    SynthesisOptions opts{"gpt-4", 0.2};
    Candidate c = synthesize(p, llm, opts);
    CHECK(c.program == btparse::parse(testing::fixture("programs/tcp_connect.bt")));
    CHECK(llm.requests()[0].model == "gpt-4");
    CHECK(llm.requests()[0].user == p.render_user());

    try {
        synthesize(p, llm, opts);
        FAIL("expected SynthesisParseError");
    } catch (const SynthesisParseError& e) {
        CHECK(e.candidate() == "kprobe:f { $x = ; }");
    }
    CHECK_THROWS_AS(synthesize(p, llm, opts), SynthesisParseError);
    CHECK_THROWS_AS(synthesize(p, llm, opts), llm::EmptyCompletion);
    CHECK_THROWS_AS(synthesize(p, llm, opts), llm::ScriptExhausted);
}
