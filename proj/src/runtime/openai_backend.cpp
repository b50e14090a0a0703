#include "stevo/runtime/openai_backend.hpp"

#include "stevo/http.hpp"

#include <cmath>

namespace stevo::runtime {

using nlohmann::json;

nlohmann::json chat_request_body(const AgentBackendRequest& req, const OpenAiConfig& cfg) {
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    json body = {
        {"model", cfg.model.empty() ? req.model_id : cfg.model},
        {"messages", messages},
        {"temperature", req.temperature},
        {"max_tokens", req.max_tokens},
        {"seed", req.seed},
    };
    if (req.want_logprobs) {
        body["logprobs"] = true;
        body["top_logprobs"] = cfg.top_logprobs;
    }
    return body;
}

AgentTurnResult parse_chat_response(const json& doc) {
    AgentTurnResult out;
    try {
        const auto& choice = doc.at("choices").at(0);
        const auto& content = choice.at("message").at("content");
        out.text = content.is_null() ? std::string() : content.get<std::string>();
        if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
            choice["logprobs"]["content"].is_array()) {
            for (const auto& pos : choice["logprobs"]["content"]) {
                TokenDistribution td;
                double mass = 0.0;
                const auto& top = pos.contains("top_logprobs") && pos["top_logprobs"].is_array() &&
                                          !pos["top_logprobs"].empty()
                                      ? pos["top_logprobs"]
                                      : json::array({{{"token", pos.at("token")}, {"logprob", pos.at("logprob")}}});
                for (const auto& alt : top) {
                    const double p = std::exp(alt.at("logprob").get<double>());
                    if (p <= 0.0) continue;
                    td.probs.emplace_back(alt.at("token").get<std::string>(), p);
                    mass += p;
                }
                if (mass > 1.0) {
                    for (auto& [tok, p] : td.probs) p /= mass;
                } else {
                    td.residual = 1.0 - mass;
                }
                out.token_distributions.push_back(std::move(td));
            }
        }
        if (doc.contains("usage") && doc["usage"].contains("completion_tokens"))
            out.token_count = doc["usage"]["completion_tokens"].get<long long>();
        else
            out.token_count = static_cast<long long>(out.token_distributions.size());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BackendFailure, std::string("malformed chat response: ") + e.what());
    }
    return out;
}

OpenAiBackend::OpenAiBackend(OpenAiConfig cfg) : cfg_(std::move(cfg)) {
    STEVO_REQUIRE(!cfg_.endpoint.empty(), ErrorCode::ConfigError, "chat endpoint is not configured");
}

AgentTurnResult OpenAiBackend::complete(const AgentBackendRequest& req) {
    std::vector<std::pair<std::string, std::string>> headers;
    if (!cfg_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + cfg_.api_key);
    http::Response res;
    try {
        res = http::post_json(cfg_.endpoint, chat_request_body(req, cfg_), headers, cfg_.timeout_seconds);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::BackendFailure, e.what());
    }
    if (res.status != 200)
        throw Error(ErrorCode::BackendFailure, "chat endpoint returned HTTP " + std::to_string(res.status));
    try {
        return parse_chat_response(json::parse(res.body));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::BackendFailure, std::string("chat response is not JSON: ") + e.what());
    }
}

}  // namespace stevo::runtime
