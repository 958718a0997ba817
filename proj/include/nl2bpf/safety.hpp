#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nl2bpf/ast.hpp"

namespace nl2bpf::safety {

enum class Mode { Builtin, External };
std::string_view to_string(Mode mode);
std::optional<Mode> mode_from_string(std::string_view s);

struct SafetyReport {
    bool ok = true;
    std::vector<std::string> messages;
    Mode mode = Mode::Builtin;

    // Messages joined by newlines.
    std::string summary() const;
};

class AnnotationsPresent : public std::runtime_error {
public:
    AnnotationsPresent() : std::runtime_error("safety check needs a program without assume/assert statements") {}
};

class ExternalToolMissing : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SafetyOptions {
    Mode mode = Mode::Builtin;
    // External mode: whitespace-separated argv; "{file}" is replaced by the
    // path of the rendered program.
    std::string command;
    std::chrono::milliseconds timeout{20000};
    uint64_t max_unroll = 100;
};

SafetyReport check(const ast::Program& program, const SafetyOptions& options = {});

}  // namespace nl2bpf::safety
