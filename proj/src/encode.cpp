#include "stevo/encode.hpp"

#include "stevo/http.hpp"

#include <cctype>

namespace stevo {

HashingEmbedder::HashingEmbedder(int dimension) : dim_(dimension) {
    STEVO_REQUIRE(dimension > 0, ErrorCode::InvalidArgument, "embedding dimension must be positive");
}

std::vector<std::string> HashingEmbedder::tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// 64-bit FNV-1a.
std::uint64_t HashingEmbedder::hash_token(std::string_view token) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : token) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RowVectorXd HashingEmbedder::embed(std::string_view text) const {
    RowVectorXd v = RowVectorXd::Zero(dim_);
    for (const auto& tok : tokenize(text)) {
        const std::uint64_t h = hash_token(tok);
        const double sign = ((h >> 63) & 1U) ? -1.0 : 1.0;
        v(static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_))) += sign;
    }
    const double norm = v.norm();
    STEVO_REQUIRE(norm > 0.0, ErrorCode::EmptyText, "text has no hashable tokens");
    return v / norm;
}

RemoteEmbedder::RemoteEmbedder(std::string endpoint, std::string model, int dimension, std::string api_key,
                               int timeout_seconds)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      dim_(dimension),
      api_key_(std::move(api_key)),
      timeout_seconds_(timeout_seconds) {}

RowVectorXd RemoteEmbedder::embed(std::string_view text) const {
    nlohmann::json body = {{"input", nlohmann::json::array({std::string(text)})}, {"model", model_}};
    std::vector<std::pair<std::string, std::string>> headers;
    if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);

    http::Response res;
    {
        std::lock_guard lock(mutex_);
        try {
            res = http::post_json(endpoint_, body, headers, timeout_seconds_);
        } catch (const std::exception& e) {
            throw Error(ErrorCode::EmbedderUnavailable, e.what());
        }
    }
    if (res.status != 200)
        throw Error(ErrorCode::EmbedderUnavailable, "embedding endpoint returned HTTP " + std::to_string(res.status));

    RowVectorXd v;
    try {
        const auto doc = nlohmann::json::parse(res.body);
        const auto& emb = doc.at("data").at(0).at("embedding");
        v.resize(static_cast<Eigen::Index>(emb.size()));
        for (std::size_t i = 0; i < emb.size(); ++i) v(static_cast<Eigen::Index>(i)) = emb[i].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::EmbedderUnavailable, std::string("malformed embedding response: ") + e.what());
    }
    STEVO_REQUIRE(v.size() == dim_, ErrorCode::DimensionMismatch,
                  "embedding has " + std::to_string(v.size()) + " dims, expected " + std::to_string(dim_));
    STEVO_REQUIRE(v.allFinite(), ErrorCode::EmbedderUnavailable, "embedding contains non-finite values");
    return v;
}

RowVectorXd encode_text(const Embedder& embedder, std::string_view text) {
    STEVO_REQUIRE(!text.empty(), ErrorCode::EmptyText, "cannot encode empty text");
    return embedder.embed(text);
}

std::string agent_description(const AgentSpec& spec) {
    std::string out = spec.model_id;
    out += '\n';
    out += spec.profile;
    for (const auto& tool : spec.tools) {
        out += '\n';
        out += tool;
    }
    return out;
}

RowVectorXd encode_agent(const Embedder& embedder, const AgentSpec& spec) {
    STEVO_REQUIRE(!spec.profile.empty(), ErrorCode::EmptyText, "agent " + std::to_string(spec.id) + " has no profile");
    return encode_text(embedder, agent_description(spec));
}

MatrixXd encode_agents(const Embedder& embedder, const std::vector<AgentSpec>& agents) {
    MatrixXd x(static_cast<Eigen::Index>(agents.size()), embedder.dimension());
    for (std::size_t i = 0; i < agents.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = encode_agent(embedder, agents[i]);
    return x;
}

ConditionVector build_condition(const RowVectorXd& query_embedding, int iteration, int expected_dim) {
    const auto d = static_cast<int>(query_embedding.size());
    STEVO_REQUIRE(expected_dim < 0 || d == expected_dim, ErrorCode::DimensionMismatch,
                  "query embedding has " + std::to_string(d) + " entries, expected " + std::to_string(expected_dim));
    ConditionVector c;
    c.values = query_embedding + sinusoidal<double>(iteration, d);
    c.iteration = iteration;
    return c;
}

}  // namespace stevo
