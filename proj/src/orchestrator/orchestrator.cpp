#include "nl2bpf/orchestrator.hpp"

#include <fmt/format.h>

#include "nl2bpf/btparse.hpp"

namespace nl2bpf::orchestrator {

using synthesis::FeedbackRecord;
using synthesis::Stage;

std::string_view to_string(Status s) { return s == Status::Success ? "success" : "needs_user_info"; }

void SessionConfig::validate() const {
    if (max_trials < 1) throw ConfigError("max_trials must be at least 1");
    if (verify_budget.count() < 0) throw ConfigError("verify budget must not be negative");
    if (!synthesis_llm) throw ConfigError("no synthesis backend configured");
    if (fork_cap < 1) throw ConfigError("fork cap must be at least 1");
    if (safety.mode == safety::Mode::External && safety.command.empty()) {
        throw ConfigError("safety mode external needs safety.command");
    }
}

std::string feedback_message(const symexec::Verdict& verdict) {
    if (const auto* v = std::get_if<symexec::AssertViolation>(&verdict)) return v->message;
    return symexec::describe(verdict);
}

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void record_example(examples::ExampleStore* store, const std::string& request, const std::string& program,
                    examples::Outcome outcome) {
    if (!store || store->frozen()) return;
    const std::string base =
        fmt::format("{}-{:016x}", examples::to_string(outcome), fnv1a(request + '\0' + program));
    std::string id = base;
    for (int n = 2; store->contains(id); ++n) id = base + "-" + std::to_string(n);
    store->add(store->make_record(id, request, program, outcome));
}

}  // namespace

SessionResult run_session(const std::string& request, const SessionConfig& cfg) {
    cfg.validate();
    static const contracts::ContractStore kNoContracts;
    const contracts::ContractStore& store = cfg.contracts ? *cfg.contracts : kNoContracts;

    SessionResult result;
    std::string last_candidate;
    for (int index = 1; index <= cfg.max_trials; ++index) {
        Trial trial;
        trial.index = index;
        result.trial_count = index;
        auto fail = [&](Stage stage, std::string message) {
            FeedbackRecord f{stage, std::move(message), index};
            trial.feedback = f;
            result.history.push_back(std::move(f));
            result.trials.push_back(std::move(trial));
        };

        const auto prompt = synthesis::build_prompt(request, cfg.examples, result.history, cfg.k_examples,
                                                    cfg.synthesis_system);
        trial.prompt = prompt.render_user();

        synthesis::Candidate candidate;
        try {
            candidate = synthesis::synthesize(prompt, *cfg.synthesis_llm, cfg.synthesis_options);
        } catch (const synthesis::SynthesisParseError& e) {
            trial.candidate = e.candidate();
            fail(Stage::Parse, e.what());
            continue;
        } catch (const llm::EmptyCompletion& e) {
            fail(Stage::Parse, e.what());
            continue;
        }
        trial.candidate = candidate.text;
        last_candidate = candidate.text;

        // Annotations written by the synthesis model are dropped; comprehension adds its own.
        const ast::Program plain = btparse::strip_annotations(candidate.program);
        comprehension::AnnotatedProgram annotated;
        if (cfg.comprehension_llm) {
            try {
                annotated = comprehension::annotate(plain, request, store, *cfg.comprehension_llm,
                                                    cfg.annotate_options);
            } catch (const comprehension::AnnotationParseError& e) {
                trial.annotation_note = e.what();
            } catch (const comprehension::StructureViolated& e) {
                trial.annotation_note = e.what();
            }
        }
        if (!cfg.comprehension_llm || !trial.annotation_note.empty()) {
            annotated = comprehension::direct_annotate(plain, store);
        }
        trial.annotated = annotated.text;
        trial.provenance = annotated.provenance;

        symexec::Verdict verdict;
        if (cfg.verify_hook) {
            verdict = cfg.verify_hook(annotated, index);
        } else {
            symexec::VerifyOptions vo;
            vo.budget = cfg.verify_budget;
            vo.fork_cap = cfg.fork_cap;
            vo.solver = cfg.solver;
            verdict = symexec::verify(annotated.program, cfg.types, vo);
        }
        trial.verdict = verdict;
        if (!std::holds_alternative<symexec::Verified>(verdict)) {
            fail(Stage::Symexec, feedback_message(verdict));
            continue;
        }

        const ast::Program stripped = btparse::strip_annotations(annotated.program);
        safety::SafetyReport report;
        try {
            report = cfg.safety_hook ? cfg.safety_hook(stripped, index) : safety::check(stripped, cfg.safety);
        } catch (const safety::ExternalToolMissing& e) {
            throw ConfigError(e.what());
        }
        trial.safety = report;
        if (!report.ok) {
            fail(Stage::SafetyGate, report.summary());
            continue;
        }

        result.status = Status::Success;
        result.program_text = btparse::render(stripped);
        result.program = stripped;
        result.trials.push_back(std::move(trial));
        record_example(cfg.examples, request, result.program_text, examples::Outcome::Success);
        if (btparse::has_annotations(annotated.program)) {
            record_example(cfg.comprehension_examples, request, annotated.text, examples::Outcome::Success);
        }
        return result;
    }
    result.status = Status::NeedsUserInfo;
    if (!last_candidate.empty()) record_example(cfg.examples, request, last_candidate, examples::Outcome::Failure);
    return result;
}

}  // namespace nl2bpf::orchestrator
