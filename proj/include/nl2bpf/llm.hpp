#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace nl2bpf::llm {

struct ChatRequest {
    std::string system;
    std::string user;
    double temperature = 0.2;
    std::string model;
};

struct ChatResponse {
    std::string text;
    std::string backend_id;
    std::chrono::duration<double> latency{0};
};

class LlmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class HttpError : public LlmError {
public:
    HttpError(int status, std::string body);
    int status() const { return status_; }
    const std::string& body() const { return body_; }

private:
    int status_;
    std::string body_;
};

class ReplayMiss : public LlmError {
public:
    explicit ReplayMiss(std::string hash);
    const std::string& hash() const { return hash_; }

private:
    std::string hash_;
};

class ScriptExhausted : public LlmError {
public:
    ScriptExhausted() : LlmError("scripted backend has no responses left") {}
};

class EmptyCompletion : public std::runtime_error {
public:
    EmptyCompletion() : std::runtime_error("completion contained no code") {}
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

struct HttpOptions {
    // Base URL up to the API version, e.g. "https://api.openai.com/v1".
    std::string endpoint = "https://api.openai.com/v1";
    // Name of the environment variable holding the key; empty for no auth.
    std::string api_key_env = "OPENAI_API_KEY";
    std::string model = "gpt-4";
    std::chrono::seconds timeout{120};
};

// OpenAI-compatible chat completions over HTTP(S).
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpOptions options);
    std::string id() const override { return "http:" + options_.endpoint; }
    ChatResponse complete(const ChatRequest& request) override;

    // POST <endpoint>/embeddings; returns the first embedding.
    std::vector<double> embed(const std::string& text, const std::string& model);

    const HttpOptions& options() const { return options_; }

private:
    std::string post(const std::string& path, const std::string& body);
    HttpOptions options_;
};

// Looks responses up by replay_key(request); one file per key.
class ReplayBackend final : public Backend {
public:
    explicit ReplayBackend(std::filesystem::path directory);
    std::string id() const override { return "replay:" + directory_.string(); }
    ChatResponse complete(const ChatRequest& request) override;

private:
    std::filesystem::path directory_;
};

// Canned responses in order. Not shareable between concurrent sessions.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(std::vector<std::string> responses);
    std::string id() const override { return "scripted"; }
    ChatResponse complete(const ChatRequest& request) override;

    std::size_t consumed() const;
    std::size_t remaining() const;
    // Every request seen so far, in order.
    std::vector<ChatRequest> requests() const;

private:
    mutable std::mutex mu_;
    std::vector<std::string> responses_;
    std::vector<ChatRequest> requests_;
    std::size_t next_ = 0;
};

// Forwards to another backend and stores each response under its replay
// key, so the run can be replayed offline later.
class RecordingBackend final : public Backend {
public:
    RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path directory);
    std::string id() const override { return "record:" + inner_->id(); }
    ChatResponse complete(const ChatRequest& request) override;

private:
    std::shared_ptr<Backend> inner_;
    std::filesystem::path directory_;
};

// Hex SHA-256 of the canonical [system, user, model] triple with CRLF/CR
// normalized to LF. Temperature is not part of the key.
std::string replay_key(const ChatRequest& request);

// First fenced block if the text has a fence, else the trimmed text.
// Throws EmptyCompletion when the result is empty.
std::string extract_code(const std::string& text);
std::string extract_code(const ChatResponse& response);

}  // namespace nl2bpf::llm
