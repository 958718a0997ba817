#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nl2bpf/ast.hpp"
#include "nl2bpf/llm.hpp"

namespace nl2bpf::contracts {

struct ConditionEntry {
    std::string subject;   // "sk", "sk->__sk_common.skc_num", "retval"
    std::string relation;  // "!=null", ">=0", "== 4"
    bool operator==(const ConditionEntry&) const = default;
};

// Relation in the checkable grammar: a comparison operator followed by an
// integer literal, or "!=null".
struct ParsedRelation {
    ast::BinaryOp op;
    int64_t value = 0;
};
std::optional<ParsedRelation> parse_relation(const std::string& relation);

struct Contract {
    std::string probe_key;  // "kretprobe:tcp_connect_init"
    std::vector<ConditionEntry> pre;
    std::vector<ConditionEntry> post;
    std::string semantics;
    std::string prototype;

    // "tcp_connect_init" for the key above.
    std::string target() const;
    // False when some entry falls outside the checkable grammar. Such
    // entries are kept verbatim and skipped by annotation.
    bool checkable() const;
    bool operator==(const Contract&) const = default;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
public:
    SchemaError(std::string key, std::string reason);
    const std::string& key() const { return key_; }
    const std::string& reason() const { return reason_; }

private:
    std::string key_;
    std::string reason_;
};

bool valid_probe_key(const std::string& key);

class ContractStore {
public:
    std::map<std::string, Contract> entries;
    std::filesystem::path source_path;

    static ContractStore load(const std::filesystem::path& path);
    static ContractStore from_json(const nlohmann::json& doc);

    nlohmann::json to_json() const;
    // One line, sorted keys, ", " and ": " separators, trailing newline.
    std::string dump() const;
    void save(const std::filesystem::path& path) const;

    // Throws SchemaError on an invalid key, replaces an existing entry.
    void put(Contract contract);
    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
};

// Exact key match alone if present; otherwise every contract whose target
// and the probe's target are prefix-related, best first (longest common
// prefix of the full keys, then key order).
std::vector<const Contract*> lookup(const ContractStore& store, const ast::ProbeSpec& probe);

// Compact JSON with sorted keys and ", " / ": " separators.
std::string dump_sorted(const nlohmann::json& value);

struct CFunction {
    std::string name;
    std::string prototype;  // whitespace-collapsed signature without the body
    std::string semantics;  // preceding comment block, markers stripped
    std::string source;     // signature through closing brace
    std::filesystem::path file;
    int line = 0;
};

// Pattern scan of one C file for file-scope function definitions.
std::vector<CFunction> scan_functions(const std::string& text, const std::filesystem::path& file = {});

struct BuildIssue {
    std::string function;
    std::filesystem::path file;
    std::string kind;  // "MalformedResponse"
    std::string detail;
};

struct BuildResult {
    ContractStore store;
    std::vector<BuildIssue> issues;
    std::size_t functions_seen = 0;
};

struct BuildOptions {
    std::string system_prompt;  // empty: built-in default
    std::string model;
    double temperature = 0.0;
};

std::string default_contract_system_prompt();

// Scans *.c and *.h under corpus_dir in sorted order, asks the backend for
// each function's conditions, writes the store to `out`.
BuildResult build_dataset(const std::filesystem::path& corpus_dir, llm::Backend& llm,
                          const std::filesystem::path& out, const BuildOptions& options = {});

}  // namespace nl2bpf::contracts
