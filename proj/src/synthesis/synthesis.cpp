#include "nl2bpf/synthesis.hpp"

#include "nl2bpf/btparse.hpp"

namespace nl2bpf::synthesis {

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::Parse: return "parse";
        case Stage::Symexec: return "symexec";
        case Stage::SafetyGate: return "safety_gate";
    }
    return "symexec";
}

std::string default_synthesis_system_prompt() {
    return "You write bpftrace programs for Linux kernel tracing. Reply with a single bpftrace program in one "
           "``` code fence and no explanation.";
}

std::string SynthesisPrompt::render_user() const {
    std::string out = "Request:\n" + user_request + "\n";
    for (std::size_t i = 0; i < examples.size(); ++i) {
        out += "\nExample " + std::to_string(i + 1) + " (correct input -> output)\nInput:\n" + examples[i].first +
               "\nOutput:\n```\n" + examples[i].second;
        if (!examples[i].second.empty() && examples[i].second.back() != '\n') out += "\n";
        out += "```\n";
    }
    if (!feedback.empty()) {
        out += "\nEarlier candidates for this request were rejected. Fix every problem below.\n";
        for (const auto& f : feedback) {
            out += "\nFeedback from trial " + std::to_string(f.trial_index) + " [" + std::string(to_string(f.stage)) +
                   "]:\n" + f.message + "\n";
        }
    }
    return out;
}

std::size_t SynthesisPrompt::length() const { return system.size() + render_user().size(); }

SynthesisPrompt build_prompt(const std::string& request, const examples::ExampleStore* store,
                             const std::vector<FeedbackRecord>& history, std::size_t k, const std::string& system) {
    SynthesisPrompt p;
    p.system = system;
    p.user_request = request;
    if (store && k > 0) {
        for (const auto& r : store->query(request, k)) p.examples.emplace_back(r.prompt, r.program);
    }
    p.feedback = history;
    return p;
}

SynthesisParseError::SynthesisParseError(std::string candidate, const std::string& message)
    : std::runtime_error(message), candidate_(std::move(candidate)) {}

Candidate synthesize(const SynthesisPrompt& prompt, llm::Backend& llm, const SynthesisOptions& options) {
    llm::ChatRequest req{prompt.system, prompt.render_user(), options.temperature, options.model};
    const std::string code = llm::extract_code(llm.complete(req));
    try {
        return {btparse::parse(code), code};
    } catch (const btparse::ParseError& e) {
        throw SynthesisParseError(code, std::string("candidate does not parse: ") + e.what());
    } catch (const btparse::EmptyProgram& e) {
        throw SynthesisParseError(code, std::string("candidate does not parse: ") + e.what());
    }
}

}  // namespace nl2bpf::synthesis
