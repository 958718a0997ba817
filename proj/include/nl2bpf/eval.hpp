#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "nl2bpf/ast.hpp"
#include "nl2bpf/llm.hpp"
#include "nl2bpf/orchestrator.hpp"

namespace nl2bpf::eval {

struct ProbeMatch {
    std::vector<std::string> probes;  // "kprobe:tcp_connect"
};
struct RegexChecks {
    std::vector<std::string> patterns;
};
struct ManualLabel {
    bool correct = false;
    std::string source;
};
using Judge = std::variant<ProbeMatch, RegexChecks, ManualLabel>;

struct EvalCase {
    std::string id;
    std::string prompt;
    std::string reference_program;
    Judge judge;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class JudgeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

EvalCase case_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalCase& c);
// JSONL, one case per line.
std::vector<EvalCase> load_dataset(const std::filesystem::path& path);

// True when the program meets the judge; throws JudgeError.
bool judge_program(const Judge& judge, const ast::Program& program);

enum class Classification { Accurate, FalsePositive, FalseNegative, JudgeError };
std::string_view to_string(Classification c);

// Non-negative exact fraction.
struct Fraction {
    int64_t num = 0;
    int64_t den = 1;
    // Decimal rounded half-up, e.g. "0.025" for 1/40 at 3 digits.
    std::string decimal(int digits = 3) const;
    std::string text() const;  // "1/40"
    double value() const { return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }
    bool operator==(const Fraction& o) const { return num * o.den == o.num * den; }
};

struct Metrics {
    Fraction accuracy;
    Fraction fp;
    Fraction fn;
    std::size_t n = 0;  // classified case-iterations
    std::size_t accurate = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    std::size_t judge_errors = 0;  // excluded from n
};

// Counts -> fractions over the classified total.
Metrics compute_metrics(std::size_t accurate, std::size_t fp, std::size_t fn, std::size_t judge_errors = 0);

struct CaseRow {
    std::string id;
    int iteration = 0;
    Classification classification = Classification::FalseNegative;
    int trial_count = 0;
    std::vector<std::string> messages;
};

struct EvalReport {
    Metrics metrics;
    std::vector<CaseRow> rows;

    nlohmann::json to_json() const;
    std::string dump() const;  // to_json().dump(2) + newline
    std::string table() const;
};

// Everything one session needs; `owned` keeps backends alive.
struct CaseSession {
    orchestrator::SessionConfig config;
    std::vector<std::shared_ptr<llm::Backend>> owned;
};
using SessionFactory = std::function<CaseSession(const EvalCase&, int iteration)>;

struct EvalOptions {
    int iterations = 1;
    int workers = 1;
};

// Rows are ordered by case, then iteration, whatever the worker count.
EvalReport run_eval(const std::vector<EvalCase>& cases, const SessionFactory& factory, const EvalOptions& options = {});

}  // namespace nl2bpf::eval
