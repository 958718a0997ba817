#include <atomic>
#include <fstream>
#include <regex>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "nl2bpf/btparse.hpp"
#include "nl2bpf/eval.hpp"

namespace nl2bpf::eval {

using nlohmann::json;

EvalCase case_from_json(const json& j) {
    EvalCase c;
    try {
        c.id = j.at("id").get<std::string>();
        c.prompt = j.at("prompt").get<std::string>();
        c.reference_program = j.value("reference_program", "");
        const json& judge = j.at("judge");
        const std::string kind = judge.at("kind").get<std::string>();
        if (kind == "probe_match") {
            c.judge = ProbeMatch{judge.at("probes").get<std::vector<std::string>>()};
        } else if (kind == "regex") {
            c.judge = RegexChecks{judge.at("patterns").get<std::vector<std::string>>()};
        } else if (kind == "manual") {
            c.judge = ManualLabel{judge.at("correct").get<bool>(), judge.value("source", "")};
        } else {
            throw DatasetError("case " + c.id + ": unknown judge kind \"" + kind + "\"");
        }
    } catch (const json::exception& e) {
        throw DatasetError(std::string("malformed eval case: ") + e.what());
    }
    if (c.id.empty()) throw DatasetError("eval case with empty id");
    return c;
}

json to_json(const EvalCase& c) {
    json judge = std::visit(
        [](const auto& j) -> json {
            using T = std::decay_t<decltype(j)>;
            if constexpr (std::is_same_v<T, ProbeMatch>) {
                return {{"kind", "probe_match"}, {"probes", j.probes}};
            } else if constexpr (std::is_same_v<T, RegexChecks>) {
                return {{"kind", "regex"}, {"patterns", j.patterns}};
            } else {
                return {{"kind", "manual"}, {"correct", j.correct}, {"source", j.source}};
            }
        },
        c.judge);
    return {{"id", c.id}, {"prompt", c.prompt}, {"reference_program", c.reference_program}, {"judge", judge}};
}

std::vector<EvalCase> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot read dataset " + path.string());
    std::vector<EvalCase> cases;
    std::set<std::string> ids;
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            cases.push_back(case_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw DatasetError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
        if (!ids.insert(cases.back().id).second) throw DatasetError("duplicate case id " + cases.back().id);
    }
    if (cases.empty()) throw DatasetError("dataset " + path.string() + " has no cases");
    return cases;
}

bool judge_program(const Judge& judge, const ast::Program& program) {
    return std::visit(
        [&](const auto& j) -> bool {
            using T = std::decay_t<decltype(j)>;
            if constexpr (std::is_same_v<T, ProbeMatch>) {
                std::set<std::string> got, want(j.probes.begin(), j.probes.end());
                for (const auto& p : btparse::extract_probes(program)) got.insert(ast::to_string(p));
                return got == want;
            } else if constexpr (std::is_same_v<T, RegexChecks>) {
                const std::string text = btparse::render(program);
                for (const auto& pattern : j.patterns) {
                    std::regex re;
                    try {
                        re = std::regex(pattern);
                    } catch (const std::regex_error& e) {
                        throw JudgeError("invalid pattern \"" + pattern + "\": " + e.what());
                    }
                    if (!std::regex_search(text, re)) return false;
                }
                return true;
            } else {
                return j.correct;
            }
        },
        judge);
}

std::string_view to_string(Classification c) {
    switch (c) {
        case Classification::Accurate: return "accurate";
        case Classification::FalsePositive: return "false_positive";
        case Classification::FalseNegative: return "false_negative";
        case Classification::JudgeError: return "judge_error";
    }
    return "judge_error";
}

std::string Fraction::decimal(int digits) const {
    if (den == 0) return "nan";
    int64_t scale = 1;
    for (int i = 0; i < digits; ++i) scale *= 10;
    // Round half up: floor((2 * num * scale + den) / (2 * den)).
    const __int128 scaled = (static_cast<__int128>(2) * num * scale + den) / (static_cast<__int128>(2) * den);
    const auto whole = static_cast<int64_t>(scaled / scale);
    const auto frac = static_cast<int64_t>(scaled % scale);
    if (digits == 0) return std::to_string(whole);
    return fmt::format("{}.{:0{}d}", whole, frac, digits);
}

std::string Fraction::text() const { return fmt::format("{}/{}", num, den); }

Metrics compute_metrics(std::size_t accurate, std::size_t fp, std::size_t fn, std::size_t judge_errors) {
    Metrics m;
    m.accurate = accurate;
    m.false_positives = fp;
    m.false_negatives = fn;
    m.judge_errors = judge_errors;
    m.n = accurate + fp + fn;
    const auto den = static_cast<int64_t>(m.n == 0 ? 1 : m.n);
    m.accuracy = {static_cast<int64_t>(accurate), den};
    m.fp = {static_cast<int64_t>(fp), den};
    m.fn = {static_cast<int64_t>(fn), den};
    return m;
}

json EvalReport::to_json() const {
    json rows_json = json::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"id", r.id},
                             {"iteration", r.iteration},
                             {"classification", std::string(eval::to_string(r.classification))},
                             {"trial_count", r.trial_count},
                             {"messages", r.messages}});
    }
    auto frac = [](const Fraction& f) { return json{{"value", f.decimal(3)}, {"exact", f.text()}}; };
    return {{"metrics",
             {{"n", metrics.n},
              {"accuracy", frac(metrics.accuracy)},
              {"fp", frac(metrics.fp)},
              {"fn", frac(metrics.fn)},
              {"accurate", metrics.accurate},
              {"false_positives", metrics.false_positives},
              {"false_negatives", metrics.false_negatives},
              {"judge_errors", metrics.judge_errors}}},
            {"rows", rows_json}};
}

std::string EvalReport::dump() const { return to_json().dump(2) + "\n"; }

std::string EvalReport::table() const {
    std::size_t width = 2;
    for (const auto& r : rows) width = std::max(width, r.id.size());
    std::string out = fmt::format("{:<{}}  {:>4}  {:<15}  {:>6}\n", "id", width, "iter", "result", "trials");
    for (const auto& r : rows) {
        out += fmt::format("{:<{}}  {:>4}  {:<15}  {:>6}\n", r.id, width, r.iteration,
                           eval::to_string(r.classification), r.trial_count);
    }
    out += fmt::format("\nn={}  accuracy={}  fp={}  fn={}  judge_errors={}\n", metrics.n, metrics.accuracy.decimal(3),
                       metrics.fp.decimal(3), metrics.fn.decimal(3), metrics.judge_errors);
    return out;
}

namespace {

CaseRow run_one(const EvalCase& c, int iteration, const SessionFactory& factory) {
    CaseRow row;
    row.id = c.id;
    row.iteration = iteration;
    CaseSession session = factory(c, iteration);
    orchestrator::SessionResult result;
    try {
        result = orchestrator::run_session(c.prompt, session.config);
    } catch (const llm::LlmError& e) {
        row.classification = Classification::FalseNegative;
        row.messages.push_back(std::string("backend error: ") + e.what());
        return row;
    }
    row.trial_count = result.trial_count;
    for (const auto& f : result.history) {
        row.messages.push_back(fmt::format("trial {} [{}]: {}", f.trial_index, synthesis::to_string(f.stage), f.message));
    }
    if (result.status == orchestrator::Status::NeedsUserInfo) {
        row.classification = Classification::FalseNegative;
        return row;
    }
    try {
        row.classification =
            judge_program(c.judge, *result.program) ? Classification::Accurate : Classification::FalsePositive;
    } catch (const JudgeError& e) {
        row.classification = Classification::JudgeError;
        row.messages.push_back(std::string("judge error: ") + e.what());
    }
    return row;
}

}  // namespace

EvalReport run_eval(const std::vector<EvalCase>& cases, const SessionFactory& factory, const EvalOptions& options) {
    if (cases.empty()) throw DatasetError("no eval cases");
    if (options.iterations < 1) throw DatasetError("iterations must be at least 1");
    const std::size_t jobs = cases.size() * static_cast<std::size_t>(options.iterations);
    std::vector<CaseRow> rows(jobs);
    std::vector<std::exception_ptr> errors(jobs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < jobs;) {
            const auto& c = cases[i / static_cast<std::size_t>(options.iterations)];
            const int iteration = static_cast<int>(i % static_cast<std::size_t>(options.iterations)) + 1;
            try {
                rows[i] = run_one(c, iteration, factory);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(jobs)));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    std::size_t acc = 0, fp = 0, fn = 0, je = 0;
    for (const auto& r : rows) {
        switch (r.classification) {
            case Classification::Accurate: ++acc; break;
            case Classification::FalsePositive: ++fp; break;
            case Classification::FalseNegative: ++fn; break;
            case Classification::JudgeError: ++je; break;
        }
    }
    EvalReport report;
    report.metrics = compute_metrics(acc, fp, fn, je);
    report.rows = std::move(rows);
    return report;
}

}  // namespace nl2bpf::eval
