#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nl2bpf/ast.hpp"
#include "nl2bpf/comprehension.hpp"
#include "nl2bpf/contracts.hpp"
#include "nl2bpf/example_store.hpp"
#include "nl2bpf/llm.hpp"
#include "nl2bpf/safety.hpp"
#include "nl2bpf/symexec/symexec.hpp"
#include "nl2bpf/synthesis.hpp"

namespace nl2bpf::orchestrator {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SessionConfig {
    int max_trials = 3;
    std::chrono::milliseconds verify_budget{30000};
    std::size_t k_examples = 3;

    llm::Backend* synthesis_llm = nullptr;
    // Null: annotate with direct_annotate only.
    llm::Backend* comprehension_llm = nullptr;
    synthesis::SynthesisOptions synthesis_options;
    comprehension::AnnotateOptions annotate_options;
    std::string synthesis_system = synthesis::default_synthesis_system_prompt();

    const contracts::ContractStore* contracts = nullptr;
    examples::ExampleStore* examples = nullptr;
    examples::ExampleStore* comprehension_examples = nullptr;

    symexec::KernelTypeMap types = symexec::KernelTypeMap::defaults();
    symexec::Solver* solver = nullptr;  // null: built-in bit-blaster
    std::size_t fork_cap = 64;
    safety::SafetyOptions safety;

    // Stage overrides, used to inject failures in tests.
    std::function<symexec::Verdict(const comprehension::AnnotatedProgram&, int trial)> verify_hook;
    std::function<safety::SafetyReport(const ast::Program&, int trial)> safety_hook;

    // Throws ConfigError.
    void validate() const;
};

struct Trial {
    int index = 0;  // 1-based
    std::string prompt;     // rendered user message sent for synthesis
    std::string candidate;  // candidate text (empty if the LLM gave nothing)
    std::string annotated;  // annotated program text
    std::vector<comprehension::AnnotationTag> provenance;
    std::string annotation_note;  // why direct_annotate was used, if it was
    std::optional<symexec::Verdict> verdict;
    std::optional<safety::SafetyReport> safety;
    std::optional<synthesis::FeedbackRecord> feedback;
};

enum class Status { Success, NeedsUserInfo };
std::string_view to_string(Status s);

struct SessionResult {
    Status status = Status::NeedsUserInfo;
    std::optional<ast::Program> program;  // set on Success, annotations stripped
    std::string program_text;
    int trial_count = 0;
    std::vector<synthesis::FeedbackRecord> history;
    std::vector<Trial> trials;
};

// Runs synthesize -> annotate -> verify -> strip -> safety check up to
// max_trials times, feeding every failure into the next prompt. Only
// configuration problems and LLM backend failures escape as exceptions.
SessionResult run_session(const std::string& request, const SessionConfig& cfg);

// Feedback text for a verdict other than Verified.
std::string feedback_message(const symexec::Verdict& verdict);

}  // namespace nl2bpf::orchestrator
