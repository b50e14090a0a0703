#include "stevo/runtime/backend.hpp"

namespace stevo::runtime {

std::vector<Message> assemble_messages(const std::string& profile, const std::vector<Message>& state,
                                       const std::vector<IncomingMessage>& incoming, const std::string& query) {
    std::vector<Message> out;
    out.reserve(state.size() + incoming.size() + 2);
    out.push_back({"system", profile});
    out.insert(out.end(), state.begin(), state.end());
    for (const auto& m : incoming) {
        std::string head = "Agent " + std::to_string(m.sender);
        if (!m.same_iteration) head += " (previous round)";
        out.push_back({"user", head + ": " + m.text});
    }
    out.push_back({"user", query});
    return out;
}

}  // namespace stevo::runtime
