#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace nl2bpf::util {

struct ProcessResult {
    int exit_code = -1;
    std::string out;
    std::string err;
    bool timed_out = false;
};

// Runs argv[0] (PATH lookup applies) with `input` on stdin, capturing both
// output streams. The child is killed once `timeout` elapses. Returns
// nullopt when the executable cannot be started.
std::optional<ProcessResult> run_process(const std::vector<std::string>& argv, const std::string& input,
                                         std::chrono::milliseconds timeout);

// Resolves a program name against PATH (names containing '/' are checked
// directly).
std::optional<std::string> find_executable(const std::string& name);

}  // namespace nl2bpf::util
