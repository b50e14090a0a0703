#pragma once

// Few-shot scheduler optimization: stochastic rollouts, a stability-weighted
// policy gradient, flow-matching regularization toward remembered
// trajectories, and Adam.

#include "stevo/memory.hpp"
#include "stevo/neural/adam.hpp"
#include "stevo/neural/checkpoint.hpp"
#include "stevo/runtime/engine.hpp"

#include <filesystem>
#include <functional>

namespace stevo {

struct Example {
    std::string id;
    std::string query;
    std::string answer;
};

struct Episode {
    std::string query_id;
    ScheduleTrajectory trajectory;
    double utility = 0.0;
    double r_sta = 0.0;
    double logprob = 0.0;
    long long token_cost = 0;
    bool failed = false;
    std::string answer;

    // Enough to recompute log P under new parameters.
    MatrixXd node_features;
    RowVectorXd query_embedding;
    std::vector<neural::IterationReplay> replay;
};

struct TrainConfig {
    int samples_per_query = 4;
    int queries_per_step = 1;
    double gamma = 0.1;
    neural::AdamConfig adam;
    int steps = 100;
    int cold_start_episodes = 16;
    bool baseline = true;
    double noise_std = 1.0;
    double gumbel_temperature = 1.0;
    std::size_t retrieve_k = 1;
    neural::FlowLossOptions flow;
    // The projected flow loss shrinks as W -> 0, so by default the experience
    // term leaves W to the utility gradient.
    bool reg_updates_projection = false;
    AdmissionConfig admission;
    runtime::VerifierKind verifier = runtime::VerifierKind::Exact;
    int checkpoint_every = 0;  // 0: only at the end
    std::uint64_t seed = 0;
};

// M stochastic rollouts; rollout m uses derive_seed(seed, m).
std::vector<Episode> collect_episodes(const Example& example, int m, const runtime::Engine& engine,
                                      const neural::SchedulerParams<double>& params, const TrainConfig& cfg,
                                      std::uint64_t seed);

// L_utility = -(1/M) sum_m e^{r_sta,m} (u_m - b) log P(G^m), b the batch-mean
// utility (0 with use_baseline off). Adds dL/dparams into grad.
double utility_gradient(const std::vector<Episode>& episodes, const neural::SchedulerParams<double>& params,
                        int flow_steps, bool use_baseline, neural::SchedulerParams<double>& grad);

// Mean flow-matching loss over the iterations both trajectories cover, each
// flow starting at GCN(X, A_{t-1}) + noise_t and ending at the retrieved
// latent. Zero, with zero gradient, when there is no overlap.
neural::FlowLossResult<double> regularization_loss(const Episode& episode, const std::vector<MatrixXd>& retrieved,
                                                   const neural::SchedulerParams<double>& params, Rng& rng,
                                                   const neural::FlowLossOptions& opt = {});

struct StepGradient {
    neural::SchedulerParams<double> utility;
    neural::SchedulerParams<double> regularization;
    neural::SchedulerParams<double> combined;  // utility + gamma * regularization
    double loss_utility = 0.0;
    double loss_reg = 0.0;
};

// Gradient of L_utility + gamma * L_reg for one batch, grouped by query. Each
// group is regularized toward the top retrieve_k memories of its query (only
// when gamma > 0, since retrieval bumps access counts); both terms are
// averaged over groups.
StepGradient combined_gradient(const std::vector<std::vector<Episode>>& groups,
                               const neural::SchedulerParams<double>& params, MemoryStore& memory, double gamma,
                               const TrainConfig& cfg, int flow_steps, Rng& rng);

struct StepReport {
    long long step = 0;
    double loss_utility = 0.0;
    double loss_reg = 0.0;
    double mean_utility = 0.0;
    double mean_r_sta = 0.0;
    double grad_norm = 0.0;
    std::size_t memory_size = 0;
    double gamma = 0.0;  // effective, after the cold-start rule
    int admitted = 0;
    int failed_episodes = 0;
};

nlohmann::json to_json(const StepReport& r);

class Trainer {
public:
    Trainer(const runtime::Engine& engine, neural::SchedulerParams<double> params, MemoryStore memory,
            TrainConfig cfg);

    // One update on queries drawn from the dataset by derive_seed(seed, step, k).
    StepReport step(const std::vector<Example>& dataset);

    // Runs until cfg.steps, calling on_step after every step. Writes a
    // checkpoint every checkpoint_every steps and at the end when checkpoint
    // is non-empty.
    void run(const std::vector<Example>& dataset, const std::function<void(const StepReport&)>& on_step,
             const std::filesystem::path& checkpoint, const std::filesystem::path& memory_path = {});

    neural::Checkpoint checkpoint() const;
    // Restores parameters, optimizer, step counter and episode count.
    void resume(const neural::Checkpoint& ckpt);
    void save(const std::filesystem::path& checkpoint, const std::filesystem::path& memory_path = {});

    const neural::SchedulerParams<double>& params() const { return params_; }
    const MemoryStore& memory() const { return memory_; }
    MemoryStore& memory() { return memory_; }
    long long steps_done() const { return step_; }
    long long episodes_seen() const { return episodes_seen_; }
    const TrainConfig& config() const { return cfg_; }

private:
    const runtime::Engine& engine_;
    neural::SchedulerParams<double> params_;
    neural::AdamState<double> adam_;
    MemoryStore memory_;
    TrainConfig cfg_;
    long long step_ = 0;
    long long episodes_seen_ = 0;
};

}  // namespace stevo
