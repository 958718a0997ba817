#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nl2bpf/ast.hpp"
#include "nl2bpf/contracts.hpp"
#include "nl2bpf/example_store.hpp"
#include "nl2bpf/llm.hpp"

namespace nl2bpf::comprehension {

enum class Provenance { Contract, PromptInferred };
std::string_view to_string(Provenance p);

struct AnnotationTag {
    std::size_t clause = 0;
    ast::SourceLoc loc;
    bool is_assert = false;
    std::string condition;  // rendered expression
    Provenance provenance = Provenance::PromptInferred;
    // Set for contract-tagged annotations.
    std::string contract_key;
    std::optional<contracts::ConditionEntry> entry;
};

struct AnnotatedProgram {
    ast::Program program;
    std::string text;  // source the program was parsed from
    std::vector<AnnotationTag> provenance;  // document order
};

class AnnotationParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class StructureViolated : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AnnotationsPresent : public std::runtime_error {
public:
    AnnotationsPresent() : std::runtime_error("program already contains assume/assert statements") {}
};

// Contracts that apply to a clause: the best lookup match per attach point,
// deduplicated, in attach-point order.
std::vector<const contracts::Contract*> clause_contracts(const ast::ProbeClause& clause,
                                                         const contracts::ContractStore& store);
// Every lookup match per attach point, deduplicated.
std::vector<const contracts::Contract*> all_matches(const ast::ProbeClause& clause,
                                                    const contracts::ContractStore& store);

// Expression for one condition entry inside `clause`, or nullopt when the
// entry is not checkable there. Subjects naming a scratch variable the
// clause assigns map to it ("sk" -> $sk); builtins stay; prototype
// parameters map to argN.
std::optional<ast::Expr> condition_expr(const contracts::ConditionEntry& entry, const ast::ProbeClause& clause,
                                        const contracts::Contract& contract);

// Deterministic, LLM-free annotation. Pre entries become assumes placed at
// clause entry (after the assignments their variables need); post entries
// of return probes become asserts at clause exit. Throws AnnotationsPresent.
AnnotatedProgram direct_annotate(const ast::Program& candidate, const contracts::ContractStore& store);

std::string default_comprehension_system_prompt();

struct AnnotateOptions {
    std::string system_prompt;  // empty: built-in default
    std::string model;
    double temperature = 0.0;
    // Annotation examples for in-context retrieval (may be null).
    const examples::ExampleStore* example_store = nullptr;
    std::size_t k = 2;
};

// LLM annotation with one silent retry on AnnotationParseError or
// StructureViolated.
AnnotatedProgram annotate(const ast::Program& candidate, const std::string& user_request,
                          const contracts::ContractStore& store, llm::Backend& llm,
                          const AnnotateOptions& options = {});

// Tags every annotation in `program` against the matched contract entries;
// each entry backs at most one annotation.
std::vector<AnnotationTag> assign_provenance(const ast::Program& program, const contracts::ContractStore& store);

}  // namespace nl2bpf::comprehension
