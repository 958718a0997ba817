#include <fstream>
#include <set>

#include "nl2bpf/comprehension.hpp"
#include "nl2bpf/config.hpp"

namespace nl2bpf::config {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects the ones nobody asked for.
class Reader {
public:
    Reader(const json& obj, std::string where, std::filesystem::path base)
        : obj_(obj), where_(std::move(where)), base_(std::move(base)) {
        if (!obj_.is_object()) throw ConfigError(label() + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!obj_.contains(key)) return;
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(label(key) + " has the wrong type");
        }
    }

    void path(const char* key, std::filesystem::path& out) {
        std::string text;
        get(key, text);
        if (!obj_.contains(key)) return;
        out = text.empty() ? std::filesystem::path() : resolve(text);
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        return obj_.contains(key) ? &obj_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [key, value] : obj_.items()) {
            if (seen_.count(key)) continue;
            if (key == "api_key" || key == "key" || key == "token") {
                throw ConfigError(label(key.c_str()) +
                                  ": credentials are not read from config files; name an environment variable "
                                  "with api_key_env");
            }
            throw ConfigError("unknown config key " + label(key.c_str()));
        }
    }

    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path path(p);
        return path.is_absolute() || base_.empty() ? path : base_ / path;
    }

    std::filesystem::path base() const { return base_; }

private:
    std::string label(const char* key = nullptr) const {
        std::string out = where_.empty() ? "" : where_;
        if (key) out += (out.empty() ? "" : ".") + std::string(key);
        return "\"" + (out.empty() ? std::string("<root>") : out) + "\"";
    }

    const json& obj_;
    std::string where_;
    std::filesystem::path base_;
    std::set<std::string> seen_;
};

BackendConfig read_backend(const json& j, const std::string& where, const std::filesystem::path& base,
                           BackendConfig out) {
    Reader r(j, where, base);
    r.get("kind", out.kind);
    r.get("endpoint", out.endpoint);
    r.get("api_key_env", out.api_key_env);
    r.get("model", out.model);
    r.get("temperature", out.temperature);
    r.get("timeout_seconds", out.timeout_seconds);
    r.path("replay_dir", out.replay_dir);
    r.path("script", out.script);
    r.path("record_dir", out.record_dir);
    r.finish();
    static const std::set<std::string> kinds = {"http", "replay", "scripted", "none"};
    if (!kinds.count(out.kind)) throw ConfigError("\"" + where + ".kind\" must be http, replay, scripted or none");
    if (out.temperature < 0 || out.temperature > 1) throw ConfigError("\"" + where + ".temperature\" must be in [0, 1]");
    if (out.timeout_seconds <= 0) throw ConfigError("\"" + where + ".timeout_seconds\" must be positive");
    return out;
}

json backend_json(const BackendConfig& b) {
    return {{"kind", b.kind},
            {"endpoint", b.endpoint},
            {"api_key_env", b.api_key_env},
            {"model", b.model},
            {"temperature", b.temperature},
            {"timeout_seconds", b.timeout_seconds},
            {"replay_dir", b.replay_dir.string()},
            {"script", b.script.string()},
            {"record_dir", b.record_dir.string()}};
}

}  // namespace

CliConfig CliConfig::defaults() {
    CliConfig c;
    c.synthesis.temperature = 0.2;
    c.comprehension.temperature = 0.0;
    c.contract_builder.temperature = 0.0;
    c.prompts.synthesis = synthesis::default_synthesis_system_prompt();
    c.prompts.comprehension = comprehension::default_comprehension_system_prompt();
    c.prompts.contracts = contracts::default_contract_system_prompt();
    return c;
}

CliConfig CliConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
    CliConfig c = defaults();
    Reader r(doc, "", base_dir);
    r.get("max_trials", c.max_trials);
    r.get("budget_seconds", c.budget_seconds);
    r.get("k", c.k);
    r.get("k_comprehension", c.k_comprehension);
    r.get("fork_cap", c.fork_cap);
    r.get("workers", c.workers);
    r.get("freeze_examples", c.freeze_examples);
    if (const json* j = r.sub("synthesis")) c.synthesis = read_backend(*j, "synthesis", base_dir, c.synthesis);
    if (const json* j = r.sub("comprehension")) {
        c.comprehension = read_backend(*j, "comprehension", base_dir, c.comprehension);
    }
    if (const json* j = r.sub("contract_builder")) {
        c.contract_builder = read_backend(*j, "contract_builder", base_dir, c.contract_builder);
    }
    r.path("contracts", c.contracts);
    r.path("examples", c.examples);
    r.path("comprehension_examples", c.comprehension_examples);
    r.path("types", c.types);
    r.get("embedding_dimension", c.embedding_dimension);
    if (const json* j = r.sub("solver")) {
        Reader s(*j, "solver", base_dir);
        s.get("backend", c.solver);
        s.get("path", c.solver_path);
        s.finish();
    }
    if (const json* j = r.sub("safety")) {
        Reader s(*j, "safety", base_dir);
        std::string mode(safety::to_string(c.safety_mode));
        s.get("mode", mode);
        auto parsed = safety::mode_from_string(mode);
        if (!parsed) throw ConfigError("\"safety.mode\" must be builtin or external");
        c.safety_mode = *parsed;
        s.get("command", c.safety_command);
        s.get("timeout_seconds", c.safety_timeout_seconds);
        s.finish();
    }
    if (const json* j = r.sub("prompts")) {
        Reader p(*j, "prompts", base_dir);
        p.get("version", c.prompts.version);
        p.get("synthesis", c.prompts.synthesis);
        p.get("comprehension", c.prompts.comprehension);
        p.get("contracts", c.prompts.contracts);
        p.finish();
    }
    r.finish();

    if (c.max_trials < 1) throw ConfigError("\"max_trials\" must be at least 1");
    if (c.budget_seconds < 0) throw ConfigError("\"budget_seconds\" must not be negative");
    if (c.fork_cap < 1) throw ConfigError("\"fork_cap\" must be at least 1");
    if (c.workers < 1) throw ConfigError("\"workers\" must be at least 1");
    if (c.embedding_dimension < 1) throw ConfigError("\"embedding_dimension\" must be positive");
    if (c.solver != "bitblast" && c.solver != "enumerator" && c.solver != "smtlib") {
        throw ConfigError("\"solver.backend\" must be bitblast, enumerator or smtlib");
    }
    if (c.safety_mode == safety::Mode::External && c.safety_command.empty()) {
        throw ConfigError("\"safety.command\" is required in external mode");
    }
    return c;
}

CliConfig CliConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(doc, path.parent_path());
}

json CliConfig::to_json() const {
    return {{"max_trials", max_trials},
            {"budget_seconds", budget_seconds},
            {"k", k},
            {"k_comprehension", k_comprehension},
            {"fork_cap", fork_cap},
            {"workers", workers},
            {"freeze_examples", freeze_examples},
            {"synthesis", backend_json(synthesis)},
            {"comprehension", backend_json(comprehension)},
            {"contract_builder", backend_json(contract_builder)},
            {"contracts", contracts.string()},
            {"examples", examples.string()},
            {"comprehension_examples", comprehension_examples.string()},
            {"types", types.string()},
            {"embedding_dimension", embedding_dimension},
            {"solver", {{"backend", solver}, {"path", solver_path}}},
            {"safety",
             {{"mode", std::string(safety::to_string(safety_mode))},
              {"command", safety_command},
              {"timeout_seconds", safety_timeout_seconds}}},
            {"prompts",
             {{"version", prompts.version},
              {"synthesis", prompts.synthesis},
              {"comprehension", prompts.comprehension},
              {"contracts", prompts.contracts}}}};
}

std::vector<std::string> script_from_json(const json& items, const std::filesystem::path& base_dir) {
    if (!items.is_array()) throw ConfigError("a script must be a JSON array");
    std::vector<std::string> out;
    for (const auto& item : items) {
        if (item.is_string()) {
            out.push_back(item.get<std::string>());
        } else if (item.is_object() && item.size() == 1 && item.contains("file") && item["file"].is_string()) {
            std::filesystem::path p(item["file"].get<std::string>());
            if (p.is_relative()) p = base_dir / p;
            std::ifstream in(p, std::ios::binary);
            if (!in) throw ConfigError("cannot read script entry " + p.string());
            out.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        } else {
            throw ConfigError("script entries must be strings or {\"file\": path}");
        }
    }
    return out;
}

std::vector<std::string> load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read script " + path.string());
    try {
        return script_from_json(json::parse(in), path.parent_path());
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::shared_ptr<llm::Backend> make_backend(const BackendConfig& cfg) {
    std::shared_ptr<llm::Backend> backend;
    if (cfg.kind == "none") return nullptr;
    if (cfg.kind == "http") {
        llm::HttpOptions o;
        o.endpoint = cfg.endpoint;
        o.api_key_env = cfg.api_key_env;
        o.model = cfg.model;
        o.timeout = std::chrono::seconds(cfg.timeout_seconds);
        backend = std::make_shared<llm::HttpBackend>(o);
    } else if (cfg.kind == "replay") {
        if (cfg.replay_dir.empty()) throw ConfigError("replay backend needs replay_dir");
        try {
            backend = std::make_shared<llm::ReplayBackend>(cfg.replay_dir);
        } catch (const llm::LlmError& e) {
            throw ConfigError(e.what());
        }
    } else if (cfg.kind == "scripted") {
        if (cfg.script.empty()) throw ConfigError("scripted backend needs script");
        backend = std::make_shared<llm::ScriptedBackend>(load_script(cfg.script));
    } else {
        throw ConfigError("unknown backend kind " + cfg.kind);
    }
    if (!cfg.record_dir.empty()) backend = std::make_shared<llm::RecordingBackend>(backend, cfg.record_dir);
    return backend;
}

std::shared_ptr<examples::Embedder> make_embedder(const CliConfig& cfg) {
    return std::make_shared<examples::HashedBagOfTokens>(cfg.embedding_dimension);
}

Runtime::Runtime(CliConfig cfg) : cfg_(std::move(cfg)), types_(symexec::KernelTypeMap::defaults()) {
    synthesis_ = make_backend(cfg_.synthesis);
    comprehension_ = make_backend(cfg_.comprehension);
    if (!cfg_.contracts.empty()) {
        try {
            contracts_ = contracts::ContractStore::load(cfg_.contracts);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
    }
    auto embedder = make_embedder(cfg_);
    try {
        if (!cfg_.examples.empty()) {
            examples_ = std::make_unique<examples::ExampleStore>(examples::ExampleStore::open(cfg_.examples, embedder));
        }
        if (examples_ && cfg_.freeze_examples) examples_->set_frozen(true, false);
        if (!cfg_.comprehension_examples.empty()) {
            comprehension_examples_ = std::make_unique<examples::ExampleStore>(
                examples::ExampleStore::open(cfg_.comprehension_examples, embedder));
        }
    } catch (const examples::StoreError& e) {
        throw ConfigError(e.what());
    }
    if (!cfg_.types.empty()) {
        std::ifstream in(cfg_.types);
        if (!in) throw ConfigError("cannot read type map " + cfg_.types.string());
        try {
            const json doc = json::parse(in);
            if (!doc.is_object()) throw ConfigError("type map must be a JSON object");
            for (const auto& [path, value] : doc.items()) {
                types_.set(path, symexec::KernelTypeMap::from_json(json{{path, value}}).lookup(path));
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(cfg_.types.string() + ": " + e.what());
        }
    }
    try {
        solver_ = symexec::make_solver(cfg_.solver, cfg_.solver_path);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

orchestrator::SessionConfig Runtime::session_config() const {
    orchestrator::SessionConfig s;
    s.max_trials = cfg_.max_trials;
    s.verify_budget = std::chrono::milliseconds(static_cast<int64_t>(cfg_.budget_seconds * 1000));
    s.k_examples = cfg_.k;
    s.synthesis_llm = synthesis_.get();
    s.comprehension_llm = comprehension_.get();
    s.synthesis_options = {cfg_.synthesis.model, cfg_.synthesis.temperature};
    s.annotate_options.system_prompt = cfg_.prompts.comprehension;
    s.annotate_options.model = cfg_.comprehension.model;
    s.annotate_options.temperature = cfg_.comprehension.temperature;
    s.annotate_options.example_store = comprehension_examples_.get();
    s.annotate_options.k = cfg_.k_comprehension;
    s.synthesis_system = cfg_.prompts.synthesis;
    s.contracts = &contracts_;
    s.examples = examples_.get();
    s.comprehension_examples = comprehension_examples_.get();
    s.types = types_;
    s.solver = solver_.get();
    s.fork_cap = cfg_.fork_cap;
    s.safety.mode = cfg_.safety_mode;
    s.safety.command = cfg_.safety_command;
    s.safety.timeout = std::chrono::seconds(cfg_.safety_timeout_seconds);
    return s;
}

}  // namespace nl2bpf::config
