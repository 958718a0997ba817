// nl2bpf: natural language to verified bpftrace programs.
//
// Exit codes: 0 ok, 1 config or parse error, 2 synthesis failure,
// 3 backend or I/O error, 4 assert violation, 5 verification timeout.

#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>

#include "CLI11.hpp"
#include "nl2bpf/btparse.hpp"
#include "nl2bpf/comprehension.hpp"
#include "nl2bpf/config.hpp"
#include "nl2bpf/contracts.hpp"
#include "nl2bpf/eval.hpp"
#include "nl2bpf/example_store.hpp"
#include "nl2bpf/orchestrator.hpp"
#include "nl2bpf/symexec/symexec.hpp"

using namespace nl2bpf;

namespace {

enum Exit { kOk = 0, kConfig = 1, kSynthesis = 2, kBackend = 3, kViolation = 4, kTimeout = 5 };

struct Overrides {
    std::string config_path;
    std::optional<int> max_trials;
    std::optional<double> budget_seconds;
    std::optional<std::size_t> k;
    std::string backend, comprehension_backend;
    std::string replay, script, comprehension_script, record;
    std::string contracts, examples, types, safety_mode, solver, solver_path;
    bool freeze = false;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw contracts::IoError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string read_stdin() {
    std::stringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
}

config::CliConfig resolve_config(const Overrides& o) {
    config::CliConfig c = o.config_path.empty() ? config::CliConfig::defaults() : config::CliConfig::load(o.config_path);
    if (o.max_trials) c.max_trials = *o.max_trials;
    if (o.budget_seconds) c.budget_seconds = *o.budget_seconds;
    if (o.k) c.k = *o.k;
    if (!o.backend.empty()) c.synthesis.kind = o.backend;
    if (!o.comprehension_backend.empty()) c.comprehension.kind = o.comprehension_backend;
    if (!o.replay.empty()) {
        for (auto* b : {&c.synthesis, &c.comprehension}) {
            b->kind = "replay";
            b->replay_dir = o.replay;
        }
    }
    if (!o.script.empty()) {
        c.synthesis.kind = "scripted";
        c.synthesis.script = o.script;
    }
    if (!o.comprehension_script.empty()) {
        c.comprehension.kind = "scripted";
        c.comprehension.script = o.comprehension_script;
    }
    if (!o.record.empty()) {
        c.synthesis.record_dir = o.record;
        c.comprehension.record_dir = o.record;
        c.contract_builder.record_dir = o.record;
    }
    if (!o.contracts.empty()) c.contracts = o.contracts;
    if (!o.examples.empty()) c.examples = o.examples;
    if (!o.types.empty()) c.types = o.types;
    if (!o.safety_mode.empty()) {
        auto m = safety::mode_from_string(o.safety_mode);
        if (!m) throw config::ConfigError("--safety-mode must be builtin or external");
        c.safety_mode = *m;
    }
    if (!o.solver.empty()) c.solver = o.solver;
    if (!o.solver_path.empty()) c.solver_path = o.solver_path;
    if (o.freeze) c.freeze_examples = true;
    if (c.max_trials < 1) throw config::ConfigError("--max-trials must be at least 1");
    return c;
}

void print_history(const orchestrator::SessionResult& r) {
    for (const auto& t : r.trials) {
        if (!t.feedback) continue;
        std::cerr << "trial " << t.index << " [" << synthesis::to_string(t.feedback->stage) << "]: " << t.feedback->message
                  << "\n";
    }
}

int cmd_synthesize(const Overrides& o, const std::string& prompt_arg) {
    config::Runtime rt(resolve_config(o));
    const bool from_args = !prompt_arg.empty();
    std::string request = from_args ? prompt_arg : read_stdin();
    if (request.find_first_not_of(" \t\r\n") == std::string::npos) {
        std::cerr << "error: empty prompt\n";
        return kConfig;
    }
    const auto cfg = rt.session_config();
    auto result = orchestrator::run_session(request, cfg);
    if (result.status == orchestrator::Status::NeedsUserInfo && from_args && isatty(STDIN_FILENO) &&
        isatty(STDERR_FILENO)) {
        print_history(result);
        std::cerr << "No verified program after " << result.trial_count
                  << " trials. Please add information about what to trace: ";
        std::string hint;
        std::getline(std::cin, hint);
        if (!hint.empty()) result = orchestrator::run_session(request + "\n" + hint, cfg);
    }
    if (result.status == orchestrator::Status::Success) {
        std::cerr << "verified after " << result.trial_count << " trial(s)\n";
        std::cout << result.program_text;
        return kOk;
    }
    print_history(result);
    std::cerr << "no verified program after " << result.trial_count << " trials\n";
    return kSynthesis;
}

void print_verdict(const symexec::Verdict& v, bool json) {
    if (json) {
        std::cout << symexec::to_json(v).dump(2) << "\n";
        return;
    }
    std::cout << symexec::describe(v) << "\n";
    if (const auto* av = std::get_if<symexec::AssertViolation>(&v)) {
        for (const auto& [name, value] : av->counterexample) {
            std::cout << "  " << name << " = " << symexec::to_json(v)["counterexample"][name].get<std::string>()
                      << " (" << value.width << " bits)\n";
        }
    }
}

int cmd_verify(const Overrides& o, const std::string& file, bool force_direct, bool json) {
    config::Runtime rt(resolve_config(o));
    ast::Program program = btparse::parse(read_file(file));
    if (force_direct || !btparse::has_annotations(program)) {
        auto annotated = comprehension::direct_annotate(btparse::strip_annotations(program), rt.contracts());
        if (btparse::has_annotations(annotated.program)) std::cerr << annotated.text;
        program = std::move(annotated.program);
    }
    symexec::VerifyOptions vo;
    vo.budget = std::chrono::milliseconds(static_cast<int64_t>(rt.config().budget_seconds * 1000));
    vo.fork_cap = rt.config().fork_cap;
    vo.solver = rt.solver();
    const auto verdict = symexec::verify(program, rt.types(), vo);
    print_verdict(verdict, json);
    if (std::holds_alternative<symexec::Verified>(verdict)) return kOk;
    if (std::holds_alternative<symexec::AssertViolation>(verdict)) return kViolation;
    if (std::holds_alternative<symexec::Timeout>(verdict)) return kTimeout;
    return kBackend;
}

int cmd_annotate(const Overrides& o, const std::string& file, const std::string& prompt, bool direct) {
    config::Runtime rt(resolve_config(o));
    ast::Program program = btparse::parse(read_file(file));
    comprehension::AnnotatedProgram out;
    if (direct || !rt.comprehension_llm()) {
        out = comprehension::direct_annotate(program, rt.contracts());
    } else {
        auto opts = rt.session_config().annotate_options;
        out = comprehension::annotate(program, prompt, rt.contracts(), *rt.comprehension_llm(), opts);
    }
    std::cout << out.text;
    if (!out.text.empty() && out.text.back() != '\n') std::cout << "\n";
    for (const auto& t : out.provenance) {
        std::cerr << "line " << t.loc.line << ": " << (t.is_assert ? "assert" : "assume") << "(" << t.condition
                  << ") " << comprehension::to_string(t.provenance);
        if (t.entry) std::cerr << " " << t.contract_key << " \"" << t.entry->subject << "\": \"" << t.entry->relation << "\"";
        std::cerr << "\n";
    }
    return kOk;
}

int cmd_build_contracts(const Overrides& o, const std::string& corpus, const std::string& out) {
    auto cfg = resolve_config(o);
    auto backend = config::make_backend(cfg.contract_builder);
    if (!backend) throw config::ConfigError("contract_builder backend is \"none\"");
    contracts::BuildOptions opts;
    opts.system_prompt = cfg.prompts.contracts;
    opts.model = cfg.contract_builder.model;
    opts.temperature = cfg.contract_builder.temperature;
    auto result = contracts::build_dataset(corpus, *backend, out, opts);
    for (const auto& issue : result.issues) {
        std::cerr << issue.kind << ": " << issue.file.string() << ": " << issue.function << ": " << issue.detail << "\n";
    }
    std::cerr << result.functions_seen << " functions, " << result.store.size() << " contracts, "
              << result.issues.size() << " skipped\n";
    return kOk;
}

int cmd_eval(const Overrides& o, const std::string& dataset, const std::string& report_path,
             const std::string& cases_script, int iterations, std::optional<int> workers) {
    config::Runtime rt(resolve_config(o));
    const auto cases = eval::load_dataset(dataset);

    nlohmann::json scripts;
    std::filesystem::path scripts_dir;
    if (!cases_script.empty()) {
        std::ifstream in(cases_script);
        if (!in) throw config::ConfigError("cannot read " + cases_script);
        scripts = nlohmann::json::parse(in);
        if (!scripts.is_object()) throw config::ConfigError("case scripts must be an object keyed by case id");
        scripts_dir = std::filesystem::path(cases_script).parent_path();
    }
    const auto base = rt.session_config();
    eval::SessionFactory factory = [&](const eval::EvalCase& c, int) {
        eval::CaseSession s;
        s.config = base;
        if (scripts.is_object()) {
            if (!scripts.contains(c.id)) throw config::ConfigError("no script for case " + c.id);
            const auto& entry = scripts.at(c.id);
            auto synth = std::make_shared<llm::ScriptedBackend>(config::script_from_json(entry.at("synthesis"), scripts_dir));
            s.owned.push_back(synth);
            s.config.synthesis_llm = synth.get();
            s.config.comprehension_llm = nullptr;
            if (entry.contains("comprehension")) {
                auto comp = std::make_shared<llm::ScriptedBackend>(
                    config::script_from_json(entry.at("comprehension"), scripts_dir));
                s.owned.push_back(comp);
                s.config.comprehension_llm = comp.get();
            }
        }
        return s;
    };
    eval::EvalOptions opts;
    opts.iterations = iterations;
    opts.workers = workers.value_or(rt.config().workers);
    const auto report = eval::run_eval(cases, factory, opts);
    std::ofstream out(report_path, std::ios::binary | std::ios::trunc);
    out << report.dump();
    if (!out) throw contracts::IoError("cannot write report " + report_path);
    std::cout << report.table();
    return kOk;
}

examples::ExampleStore open_store(const config::CliConfig& cfg, bool comprehension) {
    const auto& path = comprehension ? cfg.comprehension_examples : cfg.examples;
    if (path.empty()) {
        throw config::ConfigError(comprehension ? "no comprehension_examples path configured"
                                                : "no examples path configured (--examples)");
    }
    return examples::ExampleStore::open(path, config::make_embedder(cfg));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nl2bpf: natural language to verified bpftrace programs"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config_path, "Config file (JSON)");
    app.add_option("--max-trials", o.max_trials, "Synthesis attempts per request (default 3)");
    app.add_option("--budget-seconds", o.budget_seconds, "Symbolic execution budget per program (default 30)");
    app.add_option("--k", o.k, "Retrieved examples per synthesis prompt (default 3)");
    app.add_option("--backend", o.backend, "Synthesis backend: http, replay, scripted");
    app.add_option("--comprehension-backend", o.comprehension_backend, "Annotation backend: http, replay, scripted, none");
    app.add_option("--replay", o.replay, "Replay directory for synthesis and annotation");
    app.add_option("--script", o.script, "Scripted synthesis responses (JSON array)");
    app.add_option("--comprehension-script", o.comprehension_script, "Scripted annotation responses (JSON array)");
    app.add_option("--record", o.record, "Also store every LLM response in this replay directory");
    app.add_option("--contracts", o.contracts, "Contract file");
    app.add_option("--examples", o.examples, "Example store (JSONL)");
    app.add_option("--types", o.types, "Kernel type map (JSON)");
    app.add_option("--safety-mode", o.safety_mode, "builtin or external");
    app.add_option("--solver", o.solver, "bitblast, enumerator or smtlib");
    app.add_option("--solver-path", o.solver_path, "SMT-LIB solver executable");
    app.add_flag("--freeze", o.freeze, "Do not add records to the example store");

    std::string prompt;
    auto* synth = app.add_subcommand("synthesize", "Synthesize a verified program from a prompt");
    synth->add_option("prompt", prompt, "Request text (read from stdin if absent)");

    std::string file;
    bool direct = false, json = false;
    auto* verify = app.add_subcommand("verify", "Verify a program's annotations");
    verify->add_option("file", file)->required();
    verify->add_flag("--direct-annotate", direct, "Replace annotations with ones derived from the contracts");
    verify->add_flag("--json", json, "Print the verdict as JSON");

    std::string annotate_prompt;
    auto* annotate = app.add_subcommand("annotate", "Add assume/assert annotations to a program");
    annotate->add_option("file", file)->required();
    annotate->add_option("--prompt", annotate_prompt, "The request the program was written for");
    annotate->add_flag("--direct", direct, "Use the contracts only, no LLM");

    std::string corpus, out;
    auto* build = app.add_subcommand("build-contracts", "Build a contract file from a C source corpus");
    build->add_option("corpus", corpus)->required();
    build->add_option("out", out)->required();

    std::string dataset, report, cases_script;
    int iterations = 1;
    std::optional<int> workers;
    auto* ev = app.add_subcommand("eval", "Run sessions over a labeled dataset");
    ev->add_option("dataset", dataset)->required();
    ev->add_option("--report", report, "Report file (JSON)")->required();
    ev->add_option("--cases-script", cases_script, "Scripted responses keyed by case id");
    ev->add_option("--iterations", iterations, "Runs per case (default 1)");
    ev->add_option("--workers", workers, "Parallel sessions");

    bool comprehension_store = false;
    auto* ex = app.add_subcommand("examples", "Manage the example store");
    ex->require_subcommand(1);
    ex->add_flag("--comprehension", comprehension_store, "Operate on the comprehension example store");
    std::string ex_id, ex_prompt, ex_program, ex_outcome = "curated";
    auto* ex_add = ex->add_subcommand("add", "Add a prompt/program pair");
    ex_add->add_option("--id", ex_id)->required();
    ex_add->add_option("--prompt", ex_prompt)->required();
    ex_add->add_option("--program", ex_program, "Program file")->required();
    ex_add->add_option("--outcome", ex_outcome, "curated, success or failure");
    std::string query_text;
    std::size_t query_k = 3;
    auto* ex_query = ex->add_subcommand("query", "Most similar examples");
    ex_query->add_option("prompt", query_text)->required();
    ex_query->add_option("--top", query_k, "Number of results");
    auto* ex_freeze = ex->add_subcommand("freeze", "Stop adding records");
    auto* ex_unfreeze = ex->add_subcommand("unfreeze", "Resume adding records");
    auto* ex_clear = ex->add_subcommand("clear", "Remove every record");
    auto* ex_size = ex->add_subcommand("size", "Print the record count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*synth) return cmd_synthesize(o, prompt);
        if (*verify) return cmd_verify(o, file, direct, json);
        if (*annotate) return cmd_annotate(o, file, annotate_prompt, direct);
        if (*build) return cmd_build_contracts(o, corpus, out);
        if (*ev) return cmd_eval(o, dataset, report, cases_script, iterations, workers);
        if (*ex) {
            const auto cfg = resolve_config(o);
            auto store = open_store(cfg, comprehension_store);
            if (*ex_add) {
                auto outcome = examples::outcome_from_string(ex_outcome);
                if (!outcome) throw config::ConfigError("--outcome must be curated, success or failure");
                store.add(store.make_record(ex_id, ex_prompt, read_file(ex_program), *outcome));
            } else if (*ex_query) {
                for (const auto& s : store.query_scored(query_text, query_k)) {
                    std::cout << nlohmann::json{{"id", s.record.id},
                                                {"similarity", s.similarity},
                                                {"prompt", s.record.prompt}}
                                     .dump()
                              << "\n";
                }
            } else if (*ex_freeze) {
                store.set_frozen(true);
            } else if (*ex_unfreeze) {
                store.set_frozen(false);
            } else if (*ex_clear) {
                store.clear();
            } else if (*ex_size) {
                std::cout << store.size() << "\n";
            }
            return kOk;
        }
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const btparse::ParseError& e) {
        std::cerr << "parse error: " << file << ":" << e.what() << "\n";
        return kConfig;
    } catch (const btparse::EmptyProgram& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kConfig;
    } catch (const contracts::SchemaError& e) {
        std::cerr << "contract error: " << e.what() << "\n";
        return kConfig;
    } catch (const eval::DatasetError& e) {
        std::cerr << "dataset error: " << e.what() << "\n";
        return kConfig;
    } catch (const comprehension::AnnotationsPresent& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const llm::LlmError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kBackend;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBackend;
    }
    return kOk;
}
