#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>

#include <fmt/chrono.h>

#include "nl2bpf/example_store.hpp"

namespace nl2bpf::examples {

using nlohmann::json;

std::string_view to_string(Framework f) { return f == Framework::Bpftrace ? "bpftrace" : "libbpf"; }

std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::Curated: return "curated";
        case Outcome::Success: return "success";
        case Outcome::Failure: return "failure";
    }
    return "curated";
}

std::optional<Framework> framework_from_string(std::string_view s) {
    if (s == "bpftrace") return Framework::Bpftrace;
    if (s == "libbpf") return Framework::Libbpf;
    return std::nullopt;
}

std::optional<Outcome> outcome_from_string(std::string_view s) {
    if (s == "curated") return Outcome::Curated;
    if (s == "success") return Outcome::Success;
    if (s == "failure") return Outcome::Failure;
    return std::nullopt;
}

std::string iso8601(std::chrono::system_clock::time_point t) {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", std::chrono::time_point_cast<std::chrono::seconds>(t));
}

json ExampleRecord::to_json() const {
    return {{"id", id},
            {"prompt", prompt},
            {"program", program},
            {"framework", std::string(examples::to_string(framework))},
            {"embedding", embedding},
            {"outcome", std::string(examples::to_string(outcome))},
            {"created_at", created_at}};
}

ExampleRecord ExampleRecord::from_json(const json& j) {
    ExampleRecord r;
    try {
        r.id = j.at("id").get<std::string>();
        r.prompt = j.at("prompt").get<std::string>();
        r.program = j.at("program").get<std::string>();
        auto fw = framework_from_string(j.value("framework", "bpftrace"));
        if (!fw) throw StoreError("record " + r.id + ": unknown framework");
        r.framework = *fw;
        if (j.contains("embedding")) r.embedding = j.at("embedding").get<std::vector<double>>();
        auto oc = outcome_from_string(j.value("outcome", "curated"));
        if (!oc) throw StoreError("record " + r.id + ": unknown outcome");
        r.outcome = *oc;
        r.created_at = j.value("created_at", "");
    } catch (const json::exception& e) {
        throw StoreError(std::string("malformed example record: ") + e.what());
    }
    if (r.id.empty()) throw StoreError("example record with empty id");
    return r;
}

HashedBagOfTokens::HashedBagOfTokens(std::size_t dimension) : dimension_(dimension) {
    if (dimension_ == 0) throw StoreError("embedding dimension must be positive");
}

std::vector<double> HashedBagOfTokens::embed(const std::string& text) const {
    std::vector<double> v(dimension_, 0.0);
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        uint64_t h = 14695981039346656037ull;
        for (unsigned char c : token) {
            h ^= c;
            h *= 1099511628211ull;
        }
        v[h % dimension_] += 1.0;
        token.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) token.push_back(static_cast<char>(std::tolower(c)));
        else flush();
    }
    flush();
    double norm = 0;
    for (double x : v) norm += x * x;
    if (norm > 0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

LlmEmbedding::LlmEmbedding(std::shared_ptr<llm::HttpBackend> backend, std::string model, std::size_t dimension)
    : backend_(std::move(backend)), model_(std::move(model)), dimension_(dimension) {}

std::vector<double> LlmEmbedding::embed(const std::string& text) const {
    auto v = backend_->embed(text, model_);
    if (v.size() != dimension_) {
        throw llm::LlmError("embedding endpoint returned " + std::to_string(v.size()) + " values, expected " +
                            std::to_string(dimension_));
    }
    return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

ExampleStore::ExampleStore(std::shared_ptr<const Embedder> embedder)
    : embedder_(std::move(embedder)), clock_([] { return std::chrono::system_clock::now(); }) {}

ExampleStore::ExampleStore(ExampleStore&& other) noexcept
    : embedder_(std::move(other.embedder_)),
      path_(std::move(other.path_)),
      records_(std::move(other.records_)),
      frozen_(other.frozen_),
      clock_(std::move(other.clock_)) {}

ExampleStore ExampleStore::open(const std::filesystem::path& path, std::shared_ptr<const Embedder> embedder) {
    ExampleStore store(std::move(embedder));
    store.path_ = path;
    std::ifstream in(path);
    if (in) {
        std::string line;
        int number = 0;
        while (std::getline(in, line)) {
            ++number;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::parse_error& e) {
                throw StoreError(path.string() + ":" + std::to_string(number) + ": " + e.what());
            }
            ExampleRecord r = ExampleRecord::from_json(j);
            // Seed files may omit embeddings; compute them on load.
            if (r.embedding.empty()) r.embedding = store.embedder_->embed(r.prompt);
            if (r.embedding.size() != store.embedder_->dimension()) {
                throw StoreError(path.string() + ":" + std::to_string(number) + ": embedding has dimension " +
                                 std::to_string(r.embedding.size()));
            }
            for (const auto& existing : store.records_) {
                if (existing.id == r.id) throw DuplicateId(r.id);
            }
            store.records_.push_back(std::move(r));
        }
    } else if (std::filesystem::exists(path)) {
        throw StoreError("cannot read example store " + path.string());
    }
    store.frozen_ = std::filesystem::exists(path.string() + ".frozen");
    return store;
}

ExampleRecord ExampleStore::make_record(std::string id, std::string prompt, std::string program, Outcome outcome,
                                        Framework framework) const {
    ExampleRecord r;
    r.id = std::move(id);
    r.embedding = embedder_->embed(prompt);
    r.prompt = std::move(prompt);
    r.program = std::move(program);
    r.outcome = outcome;
    r.framework = framework;
    r.created_at = iso8601(clock_());
    return r;
}

void ExampleStore::add(ExampleRecord record) {
    std::unique_lock lock(mu_);
    if (frozen_) throw StoreFrozen();
    if (record.embedding.size() != embedder_->dimension()) {
        throw StoreError("record " + record.id + " has embedding dimension " + std::to_string(record.embedding.size()));
    }
    for (const auto& r : records_) {
        if (r.id == record.id) throw DuplicateId(record.id);
    }
    if (path_) {
        std::ofstream out(*path_, std::ios::app);
        out << record.to_json().dump() << "\n";
        if (!out) throw StoreError("cannot append to " + path_->string());
    }
    records_.push_back(std::move(record));
}

std::vector<ScoredRecord> ExampleStore::query_scored(const std::string& prompt, std::size_t k,
                                                     bool include_failures) const {
    const std::vector<double> q = embedder_->embed(prompt);
    std::shared_lock lock(mu_);
    std::vector<ScoredRecord> scored;
    for (const auto& r : records_) {
        if (!include_failures && r.outcome == Outcome::Failure) continue;
        scored.push_back({r, cosine(q, r.embedding)});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const ScoredRecord& a, const ScoredRecord& b) {
        // Cosines equal up to rounding count as ties.
        if (std::abs(a.similarity - b.similarity) > 1e-12) return a.similarity > b.similarity;
        if (a.record.created_at != b.record.created_at) return a.record.created_at < b.record.created_at;
        return a.record.id < b.record.id;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

std::vector<ExampleRecord> ExampleStore::query(const std::string& prompt, std::size_t k, bool include_failures) const {
    std::vector<ExampleRecord> out;
    for (auto& s : query_scored(prompt, k, include_failures)) out.push_back(std::move(s.record));
    return out;
}

std::vector<ExampleRecord> ExampleStore::records() const {
    std::shared_lock lock(mu_);
    return records_;
}

bool ExampleStore::contains(const std::string& id) const {
    std::shared_lock lock(mu_);
    return std::any_of(records_.begin(), records_.end(), [&](const ExampleRecord& r) { return r.id == id; });
}

std::size_t ExampleStore::size() const {
    std::shared_lock lock(mu_);
    return records_.size();
}

void ExampleStore::rewrite_file() const {
    if (!path_) return;
    std::ofstream out(*path_, std::ios::trunc);
    for (const auto& r : records_) out << r.to_json().dump() << "\n";
    if (!out) throw StoreError("cannot write " + path_->string());
}

void ExampleStore::clear() {
    std::unique_lock lock(mu_);
    records_.clear();
    rewrite_file();
}

void ExampleStore::set_frozen(bool frozen, bool persist) {
    std::unique_lock lock(mu_);
    frozen_ = frozen;
    if (!path_ || !persist) return;
    const std::filesystem::path marker = path_->string() + ".frozen";
    if (frozen) {
        std::ofstream(marker) << "";
    } else {
        std::filesystem::remove(marker);
    }
}

bool ExampleStore::frozen() const {
    std::shared_lock lock(mu_);
    return frozen_;
}

}  // namespace nl2bpf::examples
