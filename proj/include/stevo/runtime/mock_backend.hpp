#pragma once

// Scripted, fully deterministic agent backend. A scenario file lists the
// agents, an ordered rule table keyed on (agent, iteration, incoming
// messages, state), the token distributions of each reply, and the expected
// answer.

#include "stevo/runtime/backend.hpp"

#include "json.hpp"

#include <filesystem>
#include <atomic>
#include <mutex>
#include <optional>

namespace stevo::runtime {

struct MockDistribution {
    // Probability of the emitted token; the rest is spread evenly over
    // vocab_size - 1 alternatives. uniform > 0 overrides: every position is
    // uniform over that many tokens.
    double confidence = 0.97;
    int vocab_size = 8;
    int uniform = 0;
};

struct MockRule {
    std::vector<int> agents;      // empty: any
    std::vector<int> iterations;  // empty: any
    std::vector<int> from;        // all must be present among incoming senders
    std::vector<int> not_from;    // none may be present
    std::optional<int> contains_from;
    std::string incoming_contains;
    std::string state_contains;
    std::string state_lacks;
    std::string profile_contains;
    std::string query_contains;

    std::string text;
    std::optional<MockDistribution> distribution;
    bool overload_exempt = false;
};

struct MockOverload {
    int free_messages = 1;
    double confidence_drop = 0.0;
    double min_confidence = 0.25;
    int extra_tokens = 0;
};

struct MockInjection {
    std::string marker;  // substring of a poisoned agent's profile
    std::string emit;    // what a poisoned agent says
    std::string trigger;  // substring that infects receivers
    std::string infected_text;
    MockDistribution distribution{0.99, 8, 0};
};

struct MockAgent {
    std::string model_id = "mock";
    std::string profile;
    std::vector<std::string> tools;
};

struct MockScenario {
    std::string name;
    std::string answer;
    std::vector<MockAgent> agents;
    std::string anchor = "ring";
    MockDistribution distribution;
    MockOverload overload;
    std::optional<MockInjection> injection;
    std::vector<MockRule> rules;

    std::vector<AgentSpec> agent_specs() const;
};

MockScenario parse_scenario(const nlohmann::json& doc);
MockScenario load_scenario(const std::filesystem::path& path);

// Per-position token distributions for a reply.
std::vector<TokenDistribution> mock_distributions(const std::vector<std::string>& tokens, const MockDistribution& d);

class MockBackend final : public AgentBackend {
public:
    explicit MockBackend(MockScenario scenario);

    AgentTurnResult complete(const AgentBackendRequest& request) override;

    const MockScenario& scenario() const { return scenario_; }

    // Every request seen, in arrival order.
    std::vector<AgentBackendRequest> recorded() const;
    void set_recording(bool on);

private:
    const MockRule* match(const AgentBackendRequest& request) const;

    MockScenario scenario_;
    mutable std::mutex mutex_;
    std::atomic<bool> recording_{false};
    std::vector<AgentBackendRequest> log_;
};

}  // namespace stevo::runtime
