#pragma once

#include "stevo/stability.hpp"
#include "stevo/stgraph.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stevo::runtime {

struct IncomingMessage {
    int sender = 0;
    std::string text;
    bool same_iteration = true;  // false: delivered over a removed back-edge from the previous iteration
};

struct AgentBackendRequest {
    std::string model_id;
    std::vector<Message> messages;  // profile, state, peer messages, query
    bool want_logprobs = true;
    int max_tokens = 256;
    double temperature = 0.0;
    std::uint64_t seed = 0;

    // Structured view of the same content, for backends that script on it.
    int agent_id = 0;
    int iteration = 0;
    std::string query;
    std::string profile;
    std::vector<Message> state;
    std::vector<IncomingMessage> incoming;
};

struct AgentTurnResult {
    std::string text;
    std::vector<TokenDistribution> token_distributions;
    long long token_count = 0;
};

class AgentBackend {
public:
    virtual ~AgentBackend() = default;
    // Throws Error(BackendFailure) on failure. Must tolerate concurrent calls.
    virtual AgentTurnResult complete(const AgentBackendRequest& request) = 0;
};

// Profile first, then the agent's state, then one user message per peer
// message, then the query.
std::vector<Message> assemble_messages(const std::string& profile, const std::vector<Message>& state,
                                       const std::vector<IncomingMessage>& incoming, const std::string& query);

}  // namespace stevo::runtime
