#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cstdlib>

#include "json.hpp"
#include "nl2bpf/llm.hpp"

namespace nl2bpf::llm {

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // without trailing slash
};

SplitUrl split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw LlmError("endpoint is not an absolute URL: " + url);
    const auto slash = url.find('/', scheme + 3);
    SplitUrl out{url.substr(0, slash), slash == std::string::npos ? "" : url.substr(slash)};
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

}  // namespace

HttpBackend::HttpBackend(HttpOptions options) : options_(std::move(options)) { split_url(options_.endpoint); }

std::string HttpBackend::post(const std::string& path, const std::string& body) {
    const SplitUrl url = split_url(options_.endpoint);
    httplib::Client client(url.origin);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);

    httplib::Headers headers;
    if (!options_.api_key_env.empty()) {
        const char* key = std::getenv(options_.api_key_env.c_str());
        if (!key || !*key) throw LlmError("environment variable " + options_.api_key_env + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(url.path + path, headers, body, "application/json");
    if (!res) throw HttpError(0, httplib::to_string(res.error()));
    if (res->status != 200) throw HttpError(res->status, res->body);
    return res->body;
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
    const auto start = std::chrono::steady_clock::now();
    nlohmann::json messages = nlohmann::json::array();
    if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
    messages.push_back({{"role", "user"}, {"content", request.user}});
    nlohmann::json body = {{"model", request.model.empty() ? options_.model : request.model},
                           {"messages", messages},
                           {"temperature", request.temperature}};
    const std::string raw = post("/chat/completions", body.dump());
    try {
        auto reply = nlohmann::json::parse(raw);
        std::string text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        return {std::move(text), id(), std::chrono::steady_clock::now() - start};
    } catch (const nlohmann::json::exception&) {
        throw HttpError(200, "unexpected response body: " + raw.substr(0, 200));
    }
}

std::vector<double> HttpBackend::embed(const std::string& text, const std::string& model) {
    nlohmann::json body = {{"model", model}, {"input", text}};
    const std::string raw = post("/embeddings", body.dump());
    try {
        return nlohmann::json::parse(raw).at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
        throw HttpError(200, "unexpected embedding response: " + raw.substr(0, 200));
    }
}

}  // namespace nl2bpf::llm
