#include "doctest.h"
#include "fixtures.hpp"
#include "nl2bpf/btparse.hpp"
#include "nl2bpf/orchestrator.hpp"

using namespace nl2bpf;
using namespace nl2bpf::orchestrator;

namespace {

std::string fenced(const std::string& program) { return "```\n" + program + "```"; }

const std::string kRequest = testing::fixture("case_study/prompt.txt");

struct CaseStudy {
    contracts::ContractStore contracts = contracts::ContractStore::load(testing::fixture_path("contracts/tcp_connect_init.json"));
    llm::ScriptedBackend synth{{fenced(testing::fixture("programs/tcp_connect.bt")),
                                fenced(testing::fixture("programs/tcp_connect_fixed.bt"))}};
    llm::ScriptedBackend comp{{fenced(testing::fixture("programs/tcp_connect_annotated.bt")),
                               fenced(testing::fixture("case_study/tcp_connect_fixed_annotated.bt"))}};
    SessionConfig cfg;
    CaseStudy() {
        cfg.synthesis_llm = &synth;
        cfg.comprehension_llm = &comp;
        cfg.contracts = &contracts;
    }
};

std::string trivial(int n) { return "kprobe:f" + std::to_string(n) + " { printf(\"x\\n\"); }\n"; }

}  // namespace

TEST_CASE("case study converges on the second trial") {
    CaseStudy cs;
    SessionResult r = run_session(kRequest, cs.cfg);
    REQUIRE(r.status == Status::Success);
    CHECK(r.trial_count == 2);
    REQUIRE(r.trials.size() == 2);

    const Trial& first = r.trials[0];
    REQUIRE(first.verdict);
    REQUIRE(std::holds_alternative<symexec::AssertViolation>(*first.verdict));
    CHECK(std::get<symexec::AssertViolation>(*first.verdict).message.find(
              "assert($dport == bswap($sk->__sk_common.skc_dport))") != std::string::npos);
    REQUIRE(first.feedback);
    CHECK(first.feedback->stage == synthesis::Stage::Symexec);

    const Trial& second = r.trials[1];
    CHECK(std::holds_alternative<symexec::Verified>(*second.verdict));
    REQUIRE(second.safety);
    CHECK(second.safety->ok);
    CHECK(second.prompt.find(first.feedback->message) != std::string::npos);
    CHECK(second.prompt.size() > first.prompt.size());

    REQUIRE(r.program);
    CHECK(*r.program == btparse::parse(testing::fixture("programs/tcp_connect_fixed.bt")));
    CHECK_FALSE(btparse::has_annotations(*r.program));
    CHECK(r.program_text == btparse::render(*r.program));
}

TEST_CASE("feedback from every stage accumulates in order") {
    llm::ScriptedBackend synth({fenced(trivial(1)), fenced(trivial(2)), fenced(trivial(3))});
    SessionConfig cfg;
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
    SessionResult r = run_session("trace f", cfg);
    REQUIRE(r.status == Status::Success);
    REQUIRE(r.trial_count == 3);
    const std::string& p3 = r.trials[2].prompt;
    const auto a = p3.find("failure1"), b = p3.find("failure2");
    REQUIRE(a != std::string::npos);
    REQUIRE(b != std::string::npos);
    CHECK(a < b);
    CHECK(p3.find("[symexec]") < p3.find("[safety_gate]"));
    REQUIRE(r.history.size() == 2);
    CHECK(r.history[0] == synthesis::FeedbackRecord{synthesis::Stage::Symexec, "failure1", 1});
    CHECK(r.history[1] == synthesis::FeedbackRecord{synthesis::Stage::SafetyGate, "failure2", 2});
    CHECK(r.trials[1].prompt.find("failure2") == std::string::npos);
}

TEST_CASE("exhaustion returns needs-user-info with parse feedback") {
    llm::ScriptedBackend synth({"I can't", "```\nkprobe:f { $x = ; }\n```", "```\n\n```"});
    SessionConfig cfg;
    cfg.synthesis_llm = &synth;
    SessionResult r = run_session("trace f", cfg);
    CHECK(r.status == Status::NeedsUserInfo);
    CHECK(r.trial_count == 3);
    CHECK_FALSE(r.program);
    REQUIRE(r.history.size() == 3);
    for (const auto& f : r.history) CHECK(f.stage == synthesis::Stage::Parse);
    CHECK(r.trials[1].candidate == "kprobe:f { $x = ; }");
    CHECK(synth.remaining() == 0);
}

TEST_CASE("max_trials bounds the loop") {
    llm::ScriptedBackend synth({fenced(trivial(1)), fenced(trivial(2))});
    SessionConfig cfg;
    cfg.synthesis_llm = &synth;
    cfg.max_trials = 1;
    cfg.verify_hook = [](const comprehension::AnnotatedProgram&, int) -> symexec::Verdict {
        return symexec::Timeout{std::chrono::milliseconds(5), "budget exhausted"};
    };
    SessionResult r = run_session("x", cfg);
    CHECK(r.status == Status::NeedsUserInfo);
    CHECK(r.trial_count == 1);
    CHECK(synth.consumed() == 1);
}

TEST_CASE("outcomes are written back to the example store unless frozen") {
    auto emb = std::make_shared<examples::HashedBagOfTokens>(64);
    examples::ExampleStore store(emb);
    examples::ExampleStore comp_store(emb);
    {
        CaseStudy cs;
        cs.cfg.examples = &store;
        cs.cfg.comprehension_examples = &comp_store;
        run_session(kRequest, cs.cfg);
    }
    REQUIRE(store.size() == 1);
    const auto rec = store.records()[0];
    CHECK(rec.outcome == examples::Outcome::Success);
    CHECK(rec.id.rfind("success-", 0) == 0);
    CHECK(rec.prompt == kRequest);
    CHECK(btparse::parse(rec.program) == btparse::parse(testing::fixture("programs/tcp_connect_fixed.bt")));
    REQUIRE(comp_store.size() == 1);
    CHECK(btparse::has_annotations(btparse::parse(comp_store.records()[0].program)));

    llm::ScriptedBackend synth({fenced(trivial(1)), fenced(trivial(2))});
    SessionConfig cfg;
    cfg.synthesis_llm = &synth;
    cfg.examples = &store;
    cfg.max_trials = 2;
    cfg.verify_hook = [](const comprehension::AnnotatedProgram&, int) -> symexec::Verdict {
        return symexec::AssertViolation{{1, 1}, {}, "nope"};
    };
    run_session("trace f", cfg);
    REQUIRE(store.size() == 2);
    CHECK(store.records()[1].outcome == examples::Outcome::Failure);
    CHECK(store.records()[1].program == trivial(2).substr(0, trivial(2).size() - 1));

    store.set_frozen(true, false);
    CaseStudy again;
    again.cfg.examples = &store;
    CHECK(run_session(kRequest, again.cfg).status == Status::Success);
    CHECK(store.size() == 2);
}

TEST_CASE("comprehension failure falls back to direct annotation") {
    CaseStudy cs;
    llm::ScriptedBackend broken({"```\nnot a program {\n```", "```\nnot a program {\n```",
                                 "```\nnot a program {\n```", "```\nnot a program {\n```"});
    cs.cfg.comprehension_llm = &broken;
    SessionResult r = run_session(kRequest, cs.cfg);
    REQUIRE(!r.trials.empty());
    CHECK_FALSE(r.trials[0].annotation_note.empty());
    // Direct annotation adds only the contract assume, which the program satisfies.
    CHECK(r.status == Status::Success);
    CHECK(r.trial_count == 1);
    REQUIRE(r.trials[0].provenance.size() == 1);
    CHECK(r.trials[0].provenance[0].provenance == comprehension::Provenance::Contract);
}

TEST_CASE("backend errors and bad configuration escape") {
    llm::ScriptedBackend dry({});
    SessionConfig cfg;
    cfg.synthesis_llm = &dry;
    CHECK_THROWS_AS(run_session("x", cfg), llm::ScriptExhausted);

    SessionConfig none;
    CHECK_THROWS_AS(run_session("x", none), ConfigError);
    cfg.max_trials = 0;
    CHECK_THROWS_AS(run_session("x", cfg), ConfigError);
    cfg.max_trials = 3;
    cfg.safety.mode = safety::Mode::External;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("feedback text for each verdict") {
    CHECK(feedback_message(symexec::AssertViolation{{3, 5}, {}, "line 3:5: assert failed"}) ==
          "line 3:5: assert failed");
    CHECK_FALSE(feedback_message(symexec::Timeout{std::chrono::milliseconds(1), "path limit"}).empty());
}
