#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nl2bpf/ast.hpp"
#include "nl2bpf/example_store.hpp"
#include "nl2bpf/llm.hpp"

namespace nl2bpf::synthesis {

enum class Stage { Parse, Symexec, SafetyGate };
std::string_view to_string(Stage stage);

struct FeedbackRecord {
    Stage stage = Stage::Symexec;
    std::string message;
    int trial_index = 0;
    bool operator==(const FeedbackRecord&) const = default;
};

std::string default_synthesis_system_prompt();

struct SynthesisPrompt {
    std::string system;
    std::vector<std::pair<std::string, std::string>> examples;  // (prompt, program)
    std::string user_request;
    std::vector<FeedbackRecord> feedback;

    // Request, then the examples, then every feedback message in order.
    std::string render_user() const;
    // system + rendered user message, in bytes.
    std::size_t length() const;
};

// `store` may be null (no retrieval).
SynthesisPrompt build_prompt(const std::string& request, const examples::ExampleStore* store,
                             const std::vector<FeedbackRecord>& history, std::size_t k,
                             const std::string& system = default_synthesis_system_prompt());

class SynthesisParseError : public std::runtime_error {
public:
    SynthesisParseError(std::string candidate, const std::string& message);
    const std::string& candidate() const { return candidate_; }

private:
    std::string candidate_;
};

struct Candidate {
    ast::Program program;
    std::string text;  // extracted code, as parsed
};

struct SynthesisOptions {
    std::string model;
    double temperature = 0.2;
};

// complete -> extract_code -> parse. Throws llm::LlmError,
// llm::EmptyCompletion or SynthesisParseError.
Candidate synthesize(const SynthesisPrompt& prompt, llm::Backend& llm, const SynthesisOptions& options = {});

}  // namespace nl2bpf::synthesis
