#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nl2bpf/contracts.hpp"
#include "nl2bpf/example_store.hpp"
#include "nl2bpf/llm.hpp"
#include "nl2bpf/orchestrator.hpp"
#include "nl2bpf/safety.hpp"
#include "nl2bpf/symexec/solver.hpp"

namespace nl2bpf::config {

using orchestrator::ConfigError;

struct BackendConfig {
    std::string kind = "http";  // http | replay | scripted | none
    std::string endpoint = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    std::string model = "gpt-4";
    double temperature = 0.2;
    int timeout_seconds = 120;
    std::filesystem::path replay_dir;
    std::filesystem::path script;      // JSON array of responses
    std::filesystem::path record_dir;  // if set, responses are also stored here
};

struct Prompts {
    int version = 1;
    std::string synthesis;
    std::string comprehension;
    std::string contracts;
};

// Every key is optional; unknown keys are rejected. Relative paths resolve
// against the config file's directory.
struct CliConfig {
    int max_trials = 3;
    double budget_seconds = 30;
    std::size_t k = 3;
    std::size_t k_comprehension = 2;
    std::size_t fork_cap = 64;
    int workers = 1;
    bool freeze_examples = false;

    BackendConfig synthesis;
    BackendConfig comprehension;     // kind "none" means direct annotation
    BackendConfig contract_builder;  // used by build-contracts

    std::filesystem::path contracts;
    std::filesystem::path examples;
    std::filesystem::path comprehension_examples;
    std::filesystem::path types;
    std::size_t embedding_dimension = 256;

    std::string solver = "bitblast";  // bitblast | enumerator | smtlib
    std::string solver_path = "z3";

    safety::Mode safety_mode = safety::Mode::Builtin;
    std::string safety_command;
    int safety_timeout_seconds = 20;

    Prompts prompts;

    static CliConfig defaults();
    static CliConfig load(const std::filesystem::path& path);
    static CliConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
    nlohmann::json to_json() const;
};

// Responses from a JSON array whose items are strings or {"file": path}.
std::vector<std::string> load_script(const std::filesystem::path& path);
std::vector<std::string> script_from_json(const nlohmann::json& items, const std::filesystem::path& base_dir);

std::shared_ptr<llm::Backend> make_backend(const BackendConfig& cfg);

// Backends, stores and solver built from a CliConfig, plus the matching
// SessionConfig pointing into them.
class Runtime {
public:
    explicit Runtime(CliConfig cfg);

    const CliConfig& config() const { return cfg_; }
    orchestrator::SessionConfig session_config() const;

    std::shared_ptr<llm::Backend> synthesis_llm() const { return synthesis_; }
    std::shared_ptr<llm::Backend> comprehension_llm() const { return comprehension_; }
    const contracts::ContractStore& contracts() const { return contracts_; }
    examples::ExampleStore* examples() const { return examples_.get(); }
    examples::ExampleStore* comprehension_examples() const { return comprehension_examples_.get(); }
    const symexec::KernelTypeMap& types() const { return types_; }
    symexec::Solver* solver() const { return solver_.get(); }

private:
    CliConfig cfg_;
    std::shared_ptr<llm::Backend> synthesis_;
    std::shared_ptr<llm::Backend> comprehension_;
    contracts::ContractStore contracts_;
    std::unique_ptr<examples::ExampleStore> examples_;
    std::unique_ptr<examples::ExampleStore> comprehension_examples_;
    symexec::KernelTypeMap types_;
    std::unique_ptr<symexec::Solver> solver_;
};

std::shared_ptr<examples::Embedder> make_embedder(const CliConfig& cfg);

}  // namespace nl2bpf::config
