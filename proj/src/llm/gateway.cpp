#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"
#include "nl2bpf/llm.hpp"

namespace nl2bpf::llm {

namespace {

std::string normalize_newlines(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        } else {
            out.push_back(text[i]);
        }
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw LlmError("sha256 failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

}  // namespace

HttpError::HttpError(int status, std::string body)
    : LlmError("HTTP error " + std::to_string(status) + (body.empty() ? "" : ": " + body)),
      status_(status),
      body_(std::move(body)) {}

ReplayMiss::ReplayMiss(std::string hash) : LlmError("no replay entry for request " + hash), hash_(std::move(hash)) {}

std::string replay_key(const ChatRequest& request) {
    nlohmann::json canonical =
        nlohmann::json::array({normalize_newlines(request.system), normalize_newlines(request.user),
                               normalize_newlines(request.model)});
    return sha256_hex(canonical.dump());
}

ReplayBackend::ReplayBackend(std::filesystem::path directory) : directory_(std::move(directory)) {
    if (!std::filesystem::is_directory(directory_)) {
        throw LlmError("replay directory does not exist: " + directory_.string());
    }
}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
    const auto start = std::chrono::steady_clock::now();
    const std::string key = replay_key(request);
    std::ifstream in(directory_ / key, std::ios::binary);
    if (!in) throw ReplayMiss(key);
    std::stringstream ss;
    ss << in.rdbuf();
    return {ss.str(), id(), std::chrono::steady_clock::now() - start};
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses) : responses_(std::move(responses)) {}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
    if (next_ >= responses_.size()) throw ScriptExhausted();
    return {responses_[next_++], id(), std::chrono::duration<double>(0)};
}

std::size_t ScriptedBackend::consumed() const {
    std::lock_guard lock(mu_);
    return next_;
}

std::size_t ScriptedBackend::remaining() const {
    std::lock_guard lock(mu_);
    return responses_.size() - next_;
}

std::vector<ChatRequest> ScriptedBackend::requests() const {
    std::lock_guard lock(mu_);
    return requests_;
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path directory)
    : inner_(std::move(inner)), directory_(std::move(directory)) {
    std::filesystem::create_directories(directory_);
}

ChatResponse RecordingBackend::complete(const ChatRequest& request) {
    ChatResponse response = inner_->complete(request);
    std::ofstream out(directory_ / replay_key(request), std::ios::binary | std::ios::trunc);
    out << response.text;
    if (!out) throw LlmError("cannot write replay entry in " + directory_.string());
    return response;
}

std::string extract_code(const std::string& text) {
    const auto open = text.find("```");
    std::string body;
    if (open == std::string::npos) {
        body = trim(text);
    } else {
        // The rest of the opening fence line is a language tag.
        auto start = text.find('\n', open + 3);
        start = start == std::string::npos ? text.size() : start + 1;
        const auto close = text.find("```", start);
        body = trim(text.substr(start, close == std::string::npos ? std::string::npos : close - start));
    }
    if (body.empty()) throw EmptyCompletion();
    return body;
}

std::string extract_code(const ChatResponse& response) { return extract_code(response.text); }

}  // namespace nl2bpf::llm
