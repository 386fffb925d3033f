#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "atktag/errors.hpp"
#include "atktag/llm_baseline.hpp"

namespace atktag {

/// Generic chat-completions HTTP client. Configuration comes from the
/// constructor or, when arguments are empty, the environment:
///   ATTACK_TAGGER_LLM_ENDPOINT  e.g. https://api.example.com/v1/chat/completions
///   ATTACK_TAGGER_LLM_API_KEY   bearer token (optional)
///   ATTACK_TAGGER_LLM_MODEL     model name sent with each request
class HttpChatClient : public ChatCompletionClient {
public:
    explicit HttpChatClient(std::string endpoint = "", std::string api_key = "",
                            std::string model = "") {
        auto from_env = [](const char* name) -> std::string {
            const char* v = std::getenv(name);
            return v ? v : "";
        };
        endpoint_ = endpoint.empty() ? from_env("ATTACK_TAGGER_LLM_ENDPOINT") : endpoint;
        api_key_ = api_key.empty() ? from_env("ATTACK_TAGGER_LLM_API_KEY") : api_key;
        model_ = model.empty() ? from_env("ATTACK_TAGGER_LLM_MODEL") : model;
        if (endpoint_.empty())
            throw TransportError("no LLM endpoint configured; set ATTACK_TAGGER_LLM_ENDPOINT");

        std::size_t scheme = endpoint_.find("://");
        std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
        std::size_t path_start = endpoint_.find('/', host_start);
        base_ = endpoint_.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);
    }

    ChatResult complete(const PromptRequest& request) override {
        nlohmann::json body;
        body["model"] = request.model_name.empty() ? model_ : request.model_name;
        body["temperature"] = request.temperature;
        body["messages"] = nlohmann::json::array(
            {{{"role", "user"}, {"content", request.prompt_text}}});

        httplib::Client client(base_);
        client.set_read_timeout(120, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        auto res = client.Post(path_, headers, body.dump(), "application/json");
        ChatResult out;
        if (!res) {
            out.error = "request failed: " + httplib::to_string(res.error());
            return out;
        }
        if (res->status != 200) {
            out.error = "status " + std::to_string(res->status) + ": " + res->body;
            return out;
        }
        nlohmann::json doc = nlohmann::json::parse(res->body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty() ||
            !doc["choices"][0].contains("message")) {
            out.error = "response body is not a chat completion";
            return out;
        }
        out.ok = true;
        out.content = doc["choices"][0]["message"].value("content", "");
        return out;
    }

private:
    std::string endpoint_, api_key_, model_;
    std::string base_, path_;
};

} // namespace atktag
