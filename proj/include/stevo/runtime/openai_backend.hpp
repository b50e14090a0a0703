#pragma once

// OpenAI-compatible chat completions client with per-token top-k logprobs.

#include "stevo/runtime/backend.hpp"

#include "json.hpp"

namespace stevo::runtime {

struct OpenAiConfig {
    std::string endpoint;  // full URL of the chat completions route
    std::string model;     // overrides the agent's model_id when non-empty
    std::string api_key;
    int top_logprobs = 20;
    int timeout_seconds = 120;
};

nlohmann::json chat_request_body(const AgentBackendRequest& req, const OpenAiConfig& cfg);

// Parses choices[0]: message content, logprobs.content[*].top_logprobs and
// usage.completion_tokens. Top-k mass below one becomes the residual bucket.
AgentTurnResult parse_chat_response(const nlohmann::json& doc);

class OpenAiBackend final : public AgentBackend {
public:
    explicit OpenAiBackend(OpenAiConfig cfg);
    AgentTurnResult complete(const AgentBackendRequest& request) override;

private:
    OpenAiConfig cfg_;
};

}  // namespace stevo::runtime
