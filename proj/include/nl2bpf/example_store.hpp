#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nl2bpf/llm.hpp"

namespace nl2bpf::examples {

enum class Framework { Bpftrace, Libbpf };
enum class Outcome { Curated, Success, Failure };

std::string_view to_string(Framework f);
std::string_view to_string(Outcome o);
std::optional<Framework> framework_from_string(std::string_view s);
std::optional<Outcome> outcome_from_string(std::string_view s);

struct ExampleRecord {
    std::string id;
    std::string prompt;
    std::string program;
    Framework framework = Framework::Bpftrace;
    std::vector<double> embedding;
    Outcome outcome = Outcome::Curated;
    std::string created_at;  // ISO-8601 UTC, "2024-06-11T09:30:00Z"

    nlohmann::json to_json() const;
    static ExampleRecord from_json(const nlohmann::json& j);
    bool operator==(const ExampleRecord&) const = default;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<double> embed(const std::string& text) const = 0;
};

// Lowercased alphanumeric tokens, FNV-1a hashed into buckets, counted,
// L2-normalized. The empty text maps to the zero vector.
class HashedBagOfTokens final : public Embedder {
public:
    explicit HashedBagOfTokens(std::size_t dimension = 256);
    std::size_t dimension() const override { return dimension_; }
    std::vector<double> embed(const std::string& text) const override;

private:
    std::size_t dimension_;
};

class LlmEmbedding final : public Embedder {
public:
    LlmEmbedding(std::shared_ptr<llm::HttpBackend> backend, std::string model, std::size_t dimension);
    std::size_t dimension() const override { return dimension_; }
    std::vector<double> embed(const std::string& text) const override;

private:
    std::shared_ptr<llm::HttpBackend> backend_;
    std::string model_;
    std::size_t dimension_;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DuplicateId : public StoreError {
public:
    explicit DuplicateId(const std::string& id) : StoreError("duplicate example id: " + id) {}
};

class StoreFrozen : public StoreError {
public:
    StoreFrozen() : StoreError("example store is frozen") {}
};

struct ScoredRecord {
    ExampleRecord record;
    double similarity = 0;
};

// Exact-scan similarity store persisted as JSON Lines. A store opened on a
// path keeps the file in sync; the freeze flag lives in "<path>.frozen".
class ExampleStore {
public:
    using Clock = std::function<std::chrono::system_clock::time_point()>;

    explicit ExampleStore(std::shared_ptr<const Embedder> embedder);
    static ExampleStore open(const std::filesystem::path& path, std::shared_ptr<const Embedder> embedder);

    ExampleStore(ExampleStore&& other) noexcept;
    ExampleStore& operator=(ExampleStore&& other) = delete;

    const Embedder& embedder() const { return *embedder_; }
    const std::optional<std::filesystem::path>& path() const { return path_; }

    // Embeds the prompt and stamps created_at from the clock.
    ExampleRecord make_record(std::string id, std::string prompt, std::string program, Outcome outcome,
                              Framework framework = Framework::Bpftrace) const;

    // Throws DuplicateId, StoreFrozen, or StoreError on a wrong dimension.
    void add(ExampleRecord record);

    // Highest cosine similarity first; ties by earlier created_at, then id.
    std::vector<ScoredRecord> query_scored(const std::string& prompt, std::size_t k,
                                           bool include_failures = false) const;
    std::vector<ExampleRecord> query(const std::string& prompt, std::size_t k, bool include_failures = false) const;

    std::vector<ExampleRecord> records() const;
    bool contains(const std::string& id) const;
    std::size_t size() const;

    void clear();
    // persist=false changes only this instance, not the marker file.
    void set_frozen(bool frozen, bool persist = true);
    bool frozen() const;

    void set_clock(Clock clock) { clock_ = std::move(clock); }

private:
    void rewrite_file() const;

    std::shared_ptr<const Embedder> embedder_;
    std::optional<std::filesystem::path> path_;
    std::vector<ExampleRecord> records_;
    bool frozen_ = false;
    Clock clock_;
    mutable std::shared_mutex mu_;
};

std::string iso8601(std::chrono::system_clock::time_point t);

}  // namespace nl2bpf::examples
