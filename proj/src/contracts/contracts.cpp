#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

#include "nl2bpf/contracts.hpp"

namespace nl2bpf::contracts {

using nlohmann::json;

namespace {

const std::regex& subject_pattern() {
    static const std::regex re(R"([A-Za-z_]\w*((->|\.)[A-Za-z_]\w*)*)");
    return re;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<ConditionEntry> entries_from_json(const std::string& key, const char* field, const json& value) {
    if (!value.is_object()) throw SchemaError(key, std::string("\"") + field + "\" must be an object");
    std::vector<ConditionEntry> out;
    for (const auto& [subject, relation] : value.items()) {
        if (subject.empty()) throw SchemaError(key, std::string("empty subject in \"") + field + "\"");
        if (!relation.is_string()) {
            throw SchemaError(key, std::string("relation for \"") + subject + "\" in \"" + field + "\" must be a string");
        }
        out.push_back({subject, relation.get<std::string>()});
    }
    return out;
}

json entries_to_json(const std::vector<ConditionEntry>& entries) {
    json out = json::object();
    for (const auto& e : entries) out[e.subject] = e.relation;
    return out;
}

}  // namespace

SchemaError::SchemaError(std::string key, std::string reason)
    : std::runtime_error("contract \"" + key + "\": " + reason), key_(std::move(key)), reason_(std::move(reason)) {}

std::optional<ParsedRelation> parse_relation(const std::string& relation) {
    std::string r;
    for (char c : relation) {
        if (!std::isspace(static_cast<unsigned char>(c))) r.push_back(c);
    }
    if (r == "!=null") return ParsedRelation{ast::BinaryOp::Ne, 0};
    static const std::pair<const char*, ast::BinaryOp> ops[] = {
        {"==", ast::BinaryOp::Eq}, {"!=", ast::BinaryOp::Ne}, {"<=", ast::BinaryOp::Le},
        {">=", ast::BinaryOp::Ge}, {"<", ast::BinaryOp::Lt},  {">", ast::BinaryOp::Gt},
    };
    for (const auto& [text, op] : ops) {
        const std::string_view sv(text);
        if (r.compare(0, sv.size(), sv) != 0) continue;
        std::string literal = r.substr(sv.size());
        static const std::regex number(R"(-?(0[xX][0-9a-fA-F]+|[0-9]+))");
        if (!std::regex_match(literal, number)) return std::nullopt;
        try {
            const bool negative = literal[0] == '-';
            const uint64_t magnitude = std::stoull(negative ? literal.substr(1) : literal, nullptr, 0);
            if (magnitude > static_cast<uint64_t>(INT64_MAX)) return std::nullopt;
            const auto v = static_cast<int64_t>(magnitude);
            return ParsedRelation{op, negative ? -v : v};
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

bool valid_probe_key(const std::string& key) {
    static const std::regex re(R"((kprobe|kretprobe|tracepoint):[A-Za-z_][\w.:]*)");
    return std::regex_match(key, re);
}

std::string Contract::target() const {
    const auto colon = probe_key.find(':');
    return colon == std::string::npos ? probe_key : probe_key.substr(colon + 1);
}

bool Contract::checkable() const {
    auto ok = [](const ConditionEntry& e) {
        return std::regex_match(e.subject, subject_pattern()) && parse_relation(e.relation).has_value();
    };
    return std::all_of(pre.begin(), pre.end(), ok) && std::all_of(post.begin(), post.end(), ok);
}

ContractStore ContractStore::from_json(const json& doc) {
    if (!doc.is_object()) throw SchemaError("", "top level must be an object");
    ContractStore store;
    for (const auto& [key, value] : doc.items()) {
        if (!valid_probe_key(key)) throw SchemaError(key, "key must look like kprobe:<symbol>, kretprobe:<symbol> or tracepoint:<symbol>");
        if (!value.is_object()) throw SchemaError(key, "value must be an object");
        Contract c;
        c.probe_key = key;
        for (const auto& [field, v] : value.items()) {
            if (field == "pre") {
                c.pre = entries_from_json(key, "pre", v);
            } else if (field == "post") {
                c.post = entries_from_json(key, "post", v);
            } else if (field == "semantics" || field == "prototype") {
                if (!v.is_string()) throw SchemaError(key, "\"" + field + "\" must be a string");
                (field == "semantics" ? c.semantics : c.prototype) = v.get<std::string>();
            } else {
                throw SchemaError(key, "unknown field \"" + field + "\"");
            }
        }
        store.entries.emplace(key, std::move(c));
    }
    return store;
}

ContractStore ContractStore::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read contract file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }
    ContractStore store = from_json(doc);
    store.source_path = path;
    return store;
}

json ContractStore::to_json() const {
    json doc = json::object();
    for (const auto& [key, c] : entries) {
        json v = json::object();
        if (!c.pre.empty()) v["pre"] = entries_to_json(c.pre);
        if (!c.post.empty()) v["post"] = entries_to_json(c.post);
        if (!c.semantics.empty()) v["semantics"] = c.semantics;
        if (!c.prototype.empty()) v["prototype"] = c.prototype;
        doc[key] = std::move(v);
    }
    return doc;
}

std::string ContractStore::dump() const { return dump_sorted(to_json()) + "\n"; }

void ContractStore::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << dump();
    if (!out) throw IoError("cannot write contract file " + path.string());
}

void ContractStore::put(Contract contract) {
    if (!valid_probe_key(contract.probe_key)) throw SchemaError(contract.probe_key, "invalid probe key");
    std::string key = contract.probe_key;
    entries.insert_or_assign(std::move(key), std::move(contract));
}

std::string dump_sorted(const json& value) {
    // nlohmann objects are std::map backed, so iteration is already sorted.
    if (value.is_object()) {
        std::string out = "{";
        bool first = true;
        for (const auto& [k, v] : value.items()) {
            if (!first) out += ", ";
            first = false;
            out += json(k).dump() + ": " + dump_sorted(v);
        }
        return out + "}";
    }
    if (value.is_array()) {
        std::string out = "[";
        for (std::size_t i = 0; i < value.size(); ++i) {
            if (i) out += ", ";
            out += dump_sorted(value[i]);
        }
        return out + "]";
    }
    return value.dump();
}

std::vector<const Contract*> lookup(const ContractStore& store, const ast::ProbeSpec& probe) {
    const std::string key = ast::to_string(probe);
    if (auto it = store.entries.find(key); it != store.entries.end()) return {&it->second};

    auto common_prefix = [](const std::string& a, const std::string& b) {
        std::size_t n = 0;
        while (n < a.size() && n < b.size() && a[n] == b[n]) ++n;
        return n;
    };
    std::vector<std::pair<std::size_t, const Contract*>> ranked;
    for (const auto& [k, c] : store.entries) {
        const std::string t = c.target();
        if (t.empty() || probe.target.empty()) continue;
        const bool related = t.rfind(probe.target, 0) == 0 || probe.target.rfind(t, 0) == 0;
        if (related) ranked.emplace_back(common_prefix(k, key), &c);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second->probe_key < b.second->probe_key;
    });
    std::vector<const Contract*> out;
    for (const auto& r : ranked) out.push_back(r.second);
    return out;
}

// ---- corpus scan ----

namespace {

// Copy of `text` with comments, string and char literals blanked out.
std::string mask_code(const std::string& text) {
    std::string out = text;
    enum { Code, Line, Block, Str, Chr } state = Code;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        const char next = i + 1 < text.size() ? text[i + 1] : '\0';
        switch (state) {
            case Code:
                if (c == '/' && next == '/') {
                    state = Line;
                    out[i] = ' ';
                } else if (c == '/' && next == '*') {
                    state = Block;
                    out[i] = out[i + 1] = ' ';
                    ++i;
                } else if (c == '"') {
                    state = Str;
                } else if (c == '\'') {
                    state = Chr;
                }
                break;
            case Line:
                if (c == '\n') state = Code;
                else out[i] = ' ';
                break;
            case Block:
                if (c == '*' && next == '/') {
                    out[i] = out[i + 1] = ' ';
                    ++i;
                    state = Code;
                } else if (c != '\n') {
                    out[i] = ' ';
                }
                break;
            case Str:
            case Chr:
                if (c == '\\' && next != '\0') {
                    out[i] = ' ';
                    if (next != '\n') out[i + 1] = ' ';
                    ++i;
                } else if ((state == Str && c == '"') || (state == Chr && c == '\'')) {
                    state = Code;
                } else if (c != '\n') {
                    out[i] = ' ';
                }
                break;
        }
    }
    return out;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    for (std::string line; std::getline(ss, line);) lines.push_back(line);
    return lines;
}

std::string collapse_ws(const std::string& s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
        } else {
            if (space) out.push_back(' ');
            space = false;
            out.push_back(c);
        }
    }
    return out;
}

// Comment block ending on the line above `line`, markers stripped.
std::string preceding_comment(const std::vector<std::string>& lines, int line) {
    int end = line - 1;
    if (end < 0) return "";
    std::vector<std::string> body;
    const std::string last = trim(lines[end]);
    if (last.size() >= 2 && last.compare(last.size() - 2, 2, "*/") == 0) {
        int begin = end;
        while (begin >= 0 && lines[begin].find("/*") == std::string::npos) --begin;
        if (begin < 0) return "";
        for (int i = begin; i <= end; ++i) {
            std::string l = lines[i];
            if (i == begin) l = l.substr(l.find("/*") + 2);
            if (i == end) l = l.substr(0, l.rfind("*/"));
            l = trim(l);
            while (!l.empty() && l.front() == '*') l = trim(l.substr(1));
            if (!l.empty()) body.push_back(l);
        }
    } else if (last.rfind("//", 0) == 0) {
        int begin = end;
        while (begin - 1 >= 0 && trim(lines[begin - 1]).rfind("//", 0) == 0) --begin;
        for (int i = begin; i <= end; ++i) {
            std::string l = trim(lines[i]);
            l = trim(l.substr(l.find_first_not_of('/')));
            if (!l.empty()) body.push_back(l);
        }
    }
    std::string out;
    for (const auto& l : body) out += (out.empty() ? "" : "\n") + l;
    return out;
}

}  // namespace

std::vector<CFunction> scan_functions(const std::string& text, const std::filesystem::path& file) {
    const std::string masked = mask_code(text);
    const std::vector<std::string> lines = split_lines(text);

    // Offsets of line starts and brace depth at each offset.
    std::vector<std::size_t> line_start{0};
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\n') line_start.push_back(i + 1);
    }

    static const std::regex head(R"(^\s*([A-Za-z_][\w\s\*]*?[\s\*])([A-Za-z_]\w*)\s*\($)");
    static const char* keywords[] = {"if", "while", "for", "switch", "return", "sizeof", "do", "else"};

    std::vector<CFunction> out;
    int depth = 0;
    std::size_t pos = 0;
    std::size_t line = 0;
    while (pos < masked.size()) {
        while (line + 1 < line_start.size() && pos >= line_start[line + 1]) ++line;
        const char c = masked[pos];
        if (c == '{') {
            ++depth;
        } else if (c == '}') {
            depth = std::max(0, depth - 1);
        } else if (c == '(' && depth == 0) {
            // Signature text from the start of this line, or of the line
            // above for "static int\nname(...)".
            std::size_t start = line_start[line];
            std::smatch m;
            std::string prefix = masked.substr(start, pos - start + 1);
            if (!std::regex_match(prefix, m, head) && line > 0) {
                const std::string above = trim(masked.substr(line_start[line - 1], start - line_start[line - 1]));
                if (!above.empty() && std::string(";{})#").find(above.back()) == std::string::npos &&
                    above.front() != '#') {
                    start = line_start[line - 1];
                    prefix = masked.substr(start, pos - start + 1);
                }
            }
            const bool preprocessor = trim(prefix).rfind('#', 0) == 0;
            if (!preprocessor && std::regex_match(prefix, m, head) &&
                std::find(std::begin(keywords), std::end(keywords), m[2].str()) == std::end(keywords) &&
                !trim(m[1].str()).empty()) {
                // Match the parameter list, then require '{' next.
                int parens = 0;
                std::size_t close = pos;
                for (; close < masked.size(); ++close) {
                    if (masked[close] == '(') ++parens;
                    if (masked[close] == ')' && --parens == 0) break;
                }
                std::size_t brace = masked.find_first_not_of(" \t\r\n", close + 1);
                if (close < masked.size() && brace != std::string::npos && masked[brace] == '{') {
                    int body_depth = 0;
                    std::size_t end = brace;
                    for (; end < masked.size(); ++end) {
                        if (masked[end] == '{') ++body_depth;
                        if (masked[end] == '}' && --body_depth == 0) break;
                    }
                    CFunction fn;
                    fn.name = m[2].str();
                    fn.prototype = collapse_ws(text.substr(start, close - start + 1));
                    fn.semantics = preceding_comment(
                        lines, static_cast<int>(std::upper_bound(line_start.begin(), line_start.end(), start) -
                                                line_start.begin()) - 1);
                    fn.source = text.substr(start, std::min(end + 1, text.size()) - start);
                    fn.file = file;
                    fn.line = static_cast<int>(std::upper_bound(line_start.begin(), line_start.end(), start) - line_start.begin());
                    out.push_back(std::move(fn));
                    pos = std::min(end + 1, masked.size());
                    continue;
                }
            }
        }
        ++pos;
    }
    return out;
}

std::string default_contract_system_prompt() {
    return "You write Hoare-style contracts for Linux kernel functions. Given a function prototype, the "
           "comment that precedes its definition and its source, reply with one JSON object of the form "
           "{\"pre\": {\"<subject>\": \"<relation>\"}, \"post\": {\"<subject>\": \"<relation>\"}}. Subjects are "
           "parameter names or field paths such as \"sk->__sk_common.skc_num\", or \"retval\" in post. Relations "
           "are Z3 compatible conditions: one of ==, !=, <, <=, >, >= followed by an integer, or \"!=null\". "
           "Reply with the JSON only.";
}

BuildResult build_dataset(const std::filesystem::path& corpus_dir, llm::Backend& llm,
                          const std::filesystem::path& out, const BuildOptions& options) {
    if (!std::filesystem::is_directory(corpus_dir)) throw IoError("not a directory: " + corpus_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(corpus_dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".c" || ext == ".h")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    BuildResult result;
    const std::string system =
        options.system_prompt.empty() ? default_contract_system_prompt() : options.system_prompt;
    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        for (const CFunction& fn : scan_functions(ss.str(), std::filesystem::relative(path, corpus_dir))) {
            ++result.functions_seen;
            llm::ChatRequest req;
            req.system = system;
            req.model = options.model;
            req.temperature = options.temperature;
            req.user = "Function prototype:\n" + fn.prototype + "\n\nComment preceding the definition:\n" +
                       (fn.semantics.empty() ? "(none)" : fn.semantics) + "\n\nSource:\n```c\n" + fn.source +
                       "\n```\n";
            const std::string reply = llm.complete(req).text;

            auto malformed = [&](const std::string& detail) {
                result.issues.push_back({fn.name, fn.file, "MalformedResponse", detail});
            };
            json doc;
            try {
                doc = json::parse(llm::extract_code(reply));
            } catch (const std::exception& e) {
                malformed(std::string("reply is not JSON: ") + e.what());
                continue;
            }
            Contract c;
            c.probe_key = "kprobe:" + fn.name;
            c.semantics = fn.semantics;
            c.prototype = fn.prototype;
            try {
                if (!doc.is_object()) throw SchemaError(c.probe_key, "reply must be a JSON object");
                if (doc.contains("probe")) {
                    if (!doc["probe"].is_string() || !valid_probe_key(doc["probe"].get<std::string>())) {
                        throw SchemaError(c.probe_key, "invalid \"probe\"");
                    }
                    c.probe_key = doc["probe"].get<std::string>();
                }
                if (doc.contains("pre")) c.pre = entries_from_json(c.probe_key, "pre", doc["pre"]);
                if (doc.contains("post")) c.post = entries_from_json(c.probe_key, "post", doc["post"]);
            } catch (const SchemaError& e) {
                malformed(e.what());
                continue;
            }
            if (result.store.entries.count(c.probe_key)) {
                result.issues.push_back({fn.name, fn.file, "DuplicateKey", c.probe_key + " already defined"});
                continue;
            }
            result.store.put(std::move(c));
        }
    }
    result.store.save(out);
    result.store.source_path = out;
    return result;
}

}  // namespace nl2bpf::contracts
