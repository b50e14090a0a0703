#pragma once

// Per-query pipeline: sample a topology per iteration, compile it, run the
// agents level by level, score stability, stop, and aggregate.

#include "stevo/encode.hpp"
#include "stevo/neural/flow.hpp"
#include "stevo/runtime/backend.hpp"
#include "stevo/stability.hpp"
#include "stevo/stgraph.hpp"

#include <memory>
#include <optional>

namespace stevo::runtime {

enum class TerminationReason { MaxIterations, StableConfident, EmptyTopology };

std::string_view to_string(TerminationReason r);

struct RuntimeConfig {
    int max_iterations = 3;
    double stability_threshold = -0.3;
    StabilityConfig stability;
    int flow_steps = 10;
    int parallelism = 4;
    std::size_t state_turns = 8;
    bool aggregate_all_iterations = false;
    int max_tokens = 256;
    double temperature = 0.0;
};

enum class SamplingMode {
    Deterministic,  // no latent noise, threshold discretization
    Stochastic,     // latent noise and Bernoulli edge draws
};

struct RunOptions {
    std::uint64_t seed = 0;
    SamplingMode mode = SamplingMode::Deterministic;
    double noise_std = 1.0;  // Stochastic only
    double gumbel_temperature = 1.0;
    std::optional<Adjacency> fixed_topology;      // bypasses the scheduler
    std::optional<std::vector<AgentSpec>> agents;  // replaces the engine roster for this run
};

struct IterationRecord {
    int iteration = 0;
    Adjacency adjacency;
    MatrixXd edge_probs;
    MatrixXd latent;
    ExecutionPlan plan;
    std::vector<AgentTurnResult> turns;
    std::vector<bool> failed;
    std::vector<double> entropies;
    StabilityScore stability;
    long long token_cost = 0;
    neural::IterationReplay replay;
};

struct RunResult {
    std::string final_answer;
    ScheduleTrajectory trajectory;
    std::vector<StabilityScore> iteration_stability;
    StabilityScore stability;  // over every token of the run
    long long token_cost = 0;
    TerminationReason terminated_reason = TerminationReason::MaxIterations;
    std::vector<IterationRecord> iterations;
    int backend_calls = 0;
    int backend_failures = 0;
    RowVectorXd query_embedding;
    MatrixXd node_features;
};

struct IterationOutput {
    std::vector<AgentTurnResult> turns;
    std::vector<bool> failed;
    long long token_cost = 0;
};

// Runs plan.levels in order, agents within a level concurrently (at most
// cfg.parallelism at a time). Each agent hears this iteration's output of its
// remaining in-neighbors and, over removed back-edges, the sender's
// previous-iteration output. Appends each reply to the agent's state.
IterationOutput execute_iteration(const ExecutionPlan& plan, const Adjacency& adjacency,
                                  std::vector<AgentSpec>& agents, const std::string& query, int iteration,
                                  const std::vector<std::string>& previous_outputs, AgentBackend& backend,
                                  const RuntimeConfig& cfg, std::uint64_t seed);

bool should_terminate(int t, double r_sta_t, const Adjacency& a, int max_t, double stability_threshold);

// Text after the last "answer:" marker (case-insensitive) up to the end of
// that line, trimmed.
std::optional<std::string> extract_marked_answer(std::string_view text);

// Agents that give a marked answer vote with it; if nobody does, every
// non-empty reply votes. Empty when nothing votes.
std::string final_answer(const std::vector<std::pair<int, std::string>>& outputs, const ExecutionPlan& plan);

enum class VerifierKind { Exact, Numeric };

VerifierKind parse_verifier(std::string_view name);

// 1 for a match, else 0. Numeric compares the first number in each string.
double verify(VerifierKind kind, const std::string& answer, const std::string& expected);

class Engine {
public:
    Engine(std::vector<AgentSpec> agents, std::shared_ptr<const Embedder> embedder,
           std::shared_ptr<AgentBackend> backend, Adjacency anchor, RuntimeConfig cfg);

    RunResult run_query(const std::string& query, const neural::SchedulerParams<double>& params,
                        const RunOptions& opt = {}) const;

    const std::vector<AgentSpec>& agents() const { return agents_; }
    const MatrixXd& node_features() const { return node_features_; }
    const Adjacency& anchor() const { return anchor_; }
    const RuntimeConfig& config() const { return cfg_; }
    const Embedder& embedder() const { return *embedder_; }
    int dimension() const { return embedder_->dimension(); }

private:
    std::vector<AgentSpec> agents_;
    std::shared_ptr<const Embedder> embedder_;
    std::shared_ptr<AgentBackend> backend_;
    Adjacency anchor_;
    RuntimeConfig cfg_;
    MatrixXd node_features_;
};

}  // namespace stevo::runtime
