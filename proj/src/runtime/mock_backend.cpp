#include "stevo/runtime/mock_backend.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace stevo::runtime {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw Error(ErrorCode::UnknownScenario, where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw Error(ErrorCode::UnknownScenario, "unknown key '" + key + "' in " + where);
    }
}

std::vector<int> int_list(const json& v) {
    if (v.is_number_integer()) return {v.get<int>()};
    return v.get<std::vector<int>>();
}

MockDistribution parse_distribution(const json& j, MockDistribution d) {
    reject_unknown(j, {"confidence", "vocab_size", "uniform"}, "distribution");
    d.confidence = j.value("confidence", d.confidence);
    d.vocab_size = j.value("vocab_size", d.vocab_size);
    d.uniform = j.value("uniform", d.uniform);
    if (d.uniform < 0 || d.vocab_size < 1 || d.confidence <= 0.0 || d.confidence > 1.0 ||
        (d.confidence < 1.0 && d.vocab_size < 2))
        throw Error(ErrorCode::UnknownScenario, "invalid distribution settings");
    return d;
}

std::vector<std::string> split_tokens(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

bool contains_int(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

}  // namespace

std::vector<AgentSpec> MockScenario::agent_specs() const {
    std::vector<AgentSpec> out;
    for (std::size_t i = 0; i < agents.size(); ++i)
        out.push_back({static_cast<int>(i), agents[i].model_id, agents[i].profile, agents[i].tools, {}});
    return out;
}

MockScenario parse_scenario(const json& doc) {
    try {
        reject_unknown(doc, {"name", "answer", "agents", "anchor", "distribution", "overload",
                             "injection", "rules"},
                       "scenario");
        MockScenario s;
        s.name = doc.value("name", "");
        s.answer = doc.at("answer").get<std::string>();
        s.anchor = doc.value("anchor", s.anchor);
        for (const auto& a : doc.at("agents")) {
            reject_unknown(a, {"model_id", "profile", "tools"}, "agent");
            MockAgent m;
            m.model_id = a.value("model_id", m.model_id);
            m.profile = a.at("profile").get<std::string>();
            m.tools = a.value("tools", std::vector<std::string>{});
            s.agents.push_back(std::move(m));
        }
        if (s.agents.empty()) throw Error(ErrorCode::UnknownScenario, "scenario has no agents");
        if (doc.contains("distribution")) s.distribution = parse_distribution(doc["distribution"], s.distribution);
        if (doc.contains("overload")) {
            const auto& o = doc["overload"];
            reject_unknown(o, {"free_messages", "confidence_drop", "min_confidence", "extra_tokens"}, "overload");
            s.overload.free_messages = o.value("free_messages", s.overload.free_messages);
            s.overload.confidence_drop = o.value("confidence_drop", s.overload.confidence_drop);
            s.overload.min_confidence = o.value("min_confidence", s.overload.min_confidence);
            s.overload.extra_tokens = o.value("extra_tokens", s.overload.extra_tokens);
        }
        if (doc.contains("injection")) {
            const auto& in = doc["injection"];
            reject_unknown(in, {"marker", "emit", "trigger", "infected_text", "distribution"}, "injection");
            MockInjection inj;
            inj.marker = in.at("marker").get<std::string>();
            inj.emit = in.at("emit").get<std::string>();
            inj.trigger = in.at("trigger").get<std::string>();
            inj.infected_text = in.at("infected_text").get<std::string>();
            if (in.contains("distribution")) inj.distribution = parse_distribution(in["distribution"], inj.distribution);
            if (inj.marker.empty() || inj.trigger.empty() || !contains(inj.emit, inj.trigger))
                throw Error(ErrorCode::UnknownScenario, "injection must emit its own trigger");
            s.injection = std::move(inj);
        }
        for (const auto& r : doc.at("rules")) {
            reject_unknown(r, {"agent", "iteration", "from", "not_from", "contains_from", "incoming_contains",
                               "state_contains", "state_lacks", "profile_contains", "query_contains", "text",
                               "distribution", "overload_exempt"},
                           "rule");
            MockRule m;
            if (r.contains("agent")) m.agents = int_list(r["agent"]);
            if (r.contains("iteration")) m.iterations = int_list(r["iteration"]);
            if (r.contains("from")) m.from = int_list(r["from"]);
            if (r.contains("not_from")) m.not_from = int_list(r["not_from"]);
            if (r.contains("contains_from")) m.contains_from = r["contains_from"].get<int>();
            m.incoming_contains = r.value("incoming_contains", "");
            m.state_contains = r.value("state_contains", "");
            m.state_lacks = r.value("state_lacks", "");
            m.profile_contains = r.value("profile_contains", "");
            m.query_contains = r.value("query_contains", "");
            m.text = r.at("text").get<std::string>();
            if (r.contains("distribution")) m.distribution = parse_distribution(r["distribution"], s.distribution);
            m.overload_exempt = r.value("overload_exempt", false);
            if (split_tokens(m.text).empty()) throw Error(ErrorCode::UnknownScenario, "rule text has no tokens");
            s.rules.push_back(std::move(m));
        }
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::UnknownScenario, std::string("malformed scenario: ") + e.what());
    }
}

MockScenario load_scenario(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::UnknownScenario, "cannot open scenario " + path.string());
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::UnknownScenario, path.string() + ": " + e.what());
    }
    return parse_scenario(doc);
}

std::vector<TokenDistribution> mock_distributions(const std::vector<std::string>& tokens, const MockDistribution& d) {
    std::vector<TokenDistribution> out;
    out.reserve(tokens.size());
    for (const auto& tok : tokens) {
        TokenDistribution td;
        if (d.uniform > 0) {
            td.probs.emplace_back(tok, 1.0 / d.uniform);
            for (int k = 1; k < d.uniform; ++k) td.probs.emplace_back("<alt" + std::to_string(k) + ">", 1.0 / d.uniform);
        } else {
            td.probs.emplace_back(tok, d.confidence);
            if (d.confidence < 1.0) {
                const double rest = (1.0 - d.confidence) / (d.vocab_size - 1);
                for (int k = 1; k < d.vocab_size; ++k) td.probs.emplace_back("<alt" + std::to_string(k) + ">", rest);
            }
        }
        out.push_back(std::move(td));
    }
    return out;
}

MockBackend::MockBackend(MockScenario scenario) : scenario_(std::move(scenario)) {}

const MockRule* MockBackend::match(const AgentBackendRequest& req) const {
    std::set<int> senders;
    for (const auto& m : req.incoming) senders.insert(m.sender);
    auto state_has = [&](const std::string& s) {
        return std::any_of(req.state.begin(), req.state.end(), [&](const Message& m) { return contains(m.content, s); });
    };
    for (const auto& r : scenario_.rules) {
        if (!r.agents.empty() && !contains_int(r.agents, req.agent_id)) continue;
        if (!r.iterations.empty() && !contains_int(r.iterations, req.iteration)) continue;
        if (!std::all_of(r.from.begin(), r.from.end(), [&](int s) { return senders.count(s) > 0; })) continue;
        if (std::any_of(r.not_from.begin(), r.not_from.end(), [&](int s) { return senders.count(s) > 0; })) continue;
        if (!r.incoming_contains.empty() || r.contains_from) {
            const bool hit = std::any_of(req.incoming.begin(), req.incoming.end(), [&](const IncomingMessage& m) {
                return (!r.contains_from || m.sender == *r.contains_from) && contains(m.text, r.incoming_contains);
            });
            if (!hit) continue;
        }
        if (!r.state_contains.empty() && !state_has(r.state_contains)) continue;
        if (!r.state_lacks.empty() && state_has(r.state_lacks)) continue;
        if (!r.profile_contains.empty() && !contains(req.profile, r.profile_contains)) continue;
        if (!r.query_contains.empty() && !contains(req.query, r.query_contains)) continue;
        return &r;
    }
    return nullptr;
}

AgentTurnResult MockBackend::complete(const AgentBackendRequest& req) {
    if (req.agent_id < 0 || req.agent_id >= static_cast<int>(scenario_.agents.size()))
        throw Error(ErrorCode::UnknownScenario,
                    "scenario '" + scenario_.name + "' has no agent " + std::to_string(req.agent_id));
    if (recording_) {
        std::lock_guard lock(mutex_);
        log_.push_back(req);
    }

    std::string text;
    MockDistribution dist = scenario_.distribution;
    bool exempt = false;
    const auto& inj = scenario_.injection;
    const bool poisoned = inj && contains(req.profile, inj->marker);
    const bool infected =
        inj && (std::any_of(req.incoming.begin(), req.incoming.end(),
                            [&](const IncomingMessage& m) { return contains(m.text, inj->trigger); }) ||
                std::any_of(req.state.begin(), req.state.end(),
                            [&](const Message& m) { return contains(m.content, inj->trigger); }));
    if (poisoned) {
        text = inj->emit;
        dist = inj->distribution;
    } else if (infected) {
        text = inj->infected_text;
        dist = inj->distribution;
    } else {
        const MockRule* rule = match(req);
        if (!rule)
            throw Error(ErrorCode::UnknownScenario, "no rule in '" + scenario_.name + "' for agent " +
                                                        std::to_string(req.agent_id) + " at iteration " +
                                                        std::to_string(req.iteration));
        text = rule->text;
        if (rule->distribution) dist = *rule->distribution;
        exempt = rule->overload_exempt;
    }

    const auto& ov = scenario_.overload;
    const int excess = exempt ? 0 : std::max(0, static_cast<int>(req.incoming.size()) - ov.free_messages);
    if (excess > 0 && dist.uniform == 0)
        dist.confidence = std::max(std::min(dist.confidence, ov.min_confidence),
                                   dist.confidence - ov.confidence_drop * excess);
    if (excess > 0 && ov.extra_tokens > 0) {
        std::string filler;
        for (int k = 0; k < excess * ov.extra_tokens; ++k) filler += k ? " ack" : "ack";
        text = filler + "\n" + text;
    }

    AgentTurnResult out;
    out.text = text;
    const auto tokens = split_tokens(text);
    out.token_distributions = mock_distributions(tokens, dist);
    out.token_count = static_cast<long long>(tokens.size());
    return out;
}

std::vector<AgentBackendRequest> MockBackend::recorded() const {
    std::lock_guard lock(mutex_);
    return log_;
}

void MockBackend::set_recording(bool on) {
    std::lock_guard lock(mutex_);
    recording_ = on;
    log_.clear();
}

}  // namespace stevo::runtime
