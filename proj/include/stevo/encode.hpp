#pragma once

// Node features, query embeddings and the per-iteration conditioning vector.

#include "stevo/error.hpp"
#include "stevo/stgraph.hpp"
#include "stevo/types.hpp"

#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace stevo {

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual int dimension() const = 0;
    virtual RowVectorXd embed(std::string_view text) const = 0;
};

// Signed feature hashing over lower-cased alphanumeric tokens, L2-normalized.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(int dimension = 384);
    int dimension() const override { return dim_; }
    RowVectorXd embed(std::string_view text) const override;

    static std::vector<std::string> tokenize(std::string_view text);
    static std::uint64_t hash_token(std::string_view token);

private:
    int dim_;
};

// OpenAI-compatible embeddings endpoint: POST {"input": [...], "model": ...}.
class RemoteEmbedder final : public Embedder {
public:
    RemoteEmbedder(std::string endpoint, std::string model, int dimension, std::string api_key = {},
                   int timeout_seconds = 60);
    int dimension() const override { return dim_; }
    RowVectorXd embed(std::string_view text) const override;

private:
    std::string endpoint_;
    std::string model_;
    int dim_;
    std::string api_key_;
    int timeout_seconds_;
    mutable std::mutex mutex_;
};

RowVectorXd encode_text(const Embedder& embedder, std::string_view text);

// Model id, profile and tool names joined into the agent's textual description.
std::string agent_description(const AgentSpec& spec);
RowVectorXd encode_agent(const Embedder& embedder, const AgentSpec& spec);
MatrixXd encode_agents(const Embedder& embedder, const std::vector<AgentSpec>& agents);

// Standard transformer positional encoding: [2k] = sin(t / 10000^(2k/d)), [2k+1] = cos(...).
template <typename Scalar = double>
RowVec<Scalar> sinusoidal(double t, int d) {
    STEVO_REQUIRE(d > 0 && d % 2 == 0, ErrorCode::OddDimension, "sinusoidal encoding needs an even dimension");
    RowVec<Scalar> out(d);
    for (int k = 0; k < d / 2; ++k) {
        const double freq = std::pow(10000.0, -2.0 * k / d);
        out(2 * k) = static_cast<Scalar>(std::sin(t * freq));
        out(2 * k + 1) = static_cast<Scalar>(std::cos(t * freq));
    }
    return out;
}

struct ConditionVector {
    RowVectorXd values;
    int iteration = 0;
};

// H_t = query embedding + sinusoidal(t). expected_dim < 0 skips the width check.
ConditionVector build_condition(const RowVectorXd& query_embedding, int iteration, int expected_dim = -1);

}  // namespace stevo
