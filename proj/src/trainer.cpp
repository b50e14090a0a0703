#include "stevo/trainer.hpp"

#include <cmath>

namespace stevo {

using neural::SchedulerParams;

std::vector<Episode> collect_episodes(const Example& example, int m, const runtime::Engine& engine,
                                      const SchedulerParams<double>& params, const TrainConfig& cfg,
                                      std::uint64_t seed) {
    STEVO_REQUIRE(m >= 1, ErrorCode::InvalidArgument, "need at least one sample per query");
    std::vector<Episode> out;
    out.reserve(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
        runtime::RunOptions opt;
        opt.seed = derive_seed(seed, static_cast<std::uint64_t>(k));
        opt.mode = runtime::SamplingMode::Stochastic;
        opt.noise_std = cfg.noise_std;
        opt.gumbel_temperature = cfg.gumbel_temperature;
        auto run = engine.run_query(example.query, params, opt);

        Episode e;
        e.query_id = example.id;
        e.answer = run.final_answer;
        e.failed = run.backend_failures > 0;
        e.utility = e.failed ? 0.0 : runtime::verify(cfg.verifier, run.final_answer, example.answer);
        e.r_sta = run.stability.r_sta;
        e.token_cost = run.token_cost;
        std::vector<Adjacency> topologies;
        for (const auto& t : run.trajectory.topologies) topologies.push_back(t.adjacency);
        e.logprob = neural::trajectory_logprob(run.trajectory.edge_probs, topologies);
        e.trajectory = std::move(run.trajectory);
        e.trajectory.utility = e.utility;
        e.node_features = std::move(run.node_features);
        e.query_embedding = std::move(run.query_embedding);
        for (auto& it : run.iterations) e.replay.push_back(std::move(it.replay));
        out.push_back(std::move(e));
    }
    return out;
}

double utility_gradient(const std::vector<Episode>& episodes, const SchedulerParams<double>& params, int flow_steps,
                        bool use_baseline, SchedulerParams<double>& grad) {
    STEVO_REQUIRE(!episodes.empty(), ErrorCode::InvalidArgument, "no episodes");
    const double m = static_cast<double>(episodes.size());
    double b = 0.0;
    if (use_baseline) {
        for (const auto& e : episodes) b += e.utility;
        b /= m;
    }
    double loss = 0.0;
    for (const auto& e : episodes) {
        const double weight = -std::exp(e.r_sta) * (e.utility - b) / m;
        if (weight == 0.0) continue;
        double logp = 0.0;
        for (const auto& step : e.replay)
            logp += neural::replay_logprob(e.node_features, step, params, flow_steps, weight, &grad);
        loss += weight * logp;
    }
    return loss;
}

neural::FlowLossResult<double> regularization_loss(const Episode& episode, const std::vector<MatrixXd>& retrieved,
                                                   const SchedulerParams<double>& params, Rng& rng,
                                                   const neural::FlowLossOptions& opt) {
    neural::FlowLossResult<double> total;
    total.grad = neural::zeros_like(params);
    const std::size_t overlap = std::min(episode.replay.size(), retrieved.size());
    if (overlap == 0) return total;
    for (std::size_t t = 0; t < overlap; ++t) {
        const auto& step = episode.replay[t];
        const neural::GcnStart<double> start{episode.node_features, step.previous, step.noise};
        const auto r = neural::fm_loss(neural::FlowStart<double>(start), retrieved[t], step.condition, params, rng, opt);
        total.loss += r.loss;
        neural::axpy(total.grad, 1.0, r.grad);
    }
    const double inv = 1.0 / static_cast<double>(overlap);
    total.loss *= inv;
    neural::scale(total.grad, inv);
    return total;
}

StepGradient combined_gradient(const std::vector<std::vector<Episode>>& groups, const SchedulerParams<double>& params,
                               MemoryStore& memory, double gamma, const TrainConfig& cfg, int flow_steps, Rng& rng) {
    STEVO_REQUIRE(!groups.empty(), ErrorCode::InvalidArgument, "no episode groups");
    const double q = static_cast<double>(groups.size());
    StepGradient out;
    out.utility = neural::zeros_like(params);
    out.regularization = neural::zeros_like(params);
    for (const auto& episodes : groups) {
        auto g = neural::zeros_like(params);
        out.loss_utility += utility_gradient(episodes, params, flow_steps, cfg.baseline, g) / q;
        neural::axpy(out.utility, 1.0 / q, g);
        if (gamma <= 0.0) continue;
        const auto hits = memory.retrieve(episodes.front().query_embedding, cfg.retrieve_k);
        if (hits.empty()) continue;
        auto gr = neural::zeros_like(params);
        double loss = 0.0;
        int count = 0;
        for (const auto& e : episodes) {
            for (const auto& h : hits) {
                const auto r = regularization_loss(e, h.latents, params, rng, cfg.flow);
                loss += r.loss;
                neural::axpy(gr, 1.0, r.grad);
                ++count;
            }
        }
        if (!cfg.reg_updates_projection) gr.projection.setZero();
        out.loss_reg += loss / count / q;
        neural::axpy(out.regularization, 1.0 / count / q, gr);
    }
    out.combined = out.utility;
    neural::axpy(out.combined, gamma, out.regularization);
    return out;
}

nlohmann::json to_json(const StepReport& r) {
    return {
        {"step", r.step},
        {"loss_utility", r.loss_utility},
        {"loss_reg", r.loss_reg},
        {"mean_utility", r.mean_utility},
        {"mean_r_sta", r.mean_r_sta},
        {"grad_norm", r.grad_norm},
        {"memory_size", r.memory_size},
        {"gamma", r.gamma},
        {"admitted", r.admitted},
        {"failed_episodes", r.failed_episodes},
    };
}

Trainer::Trainer(const runtime::Engine& engine, SchedulerParams<double> params, MemoryStore memory, TrainConfig cfg)
    : engine_(engine),
      params_(std::move(params)),
      adam_(neural::adam_init(params_)),
      memory_(std::move(memory)),
      cfg_(cfg) {
    STEVO_REQUIRE(cfg_.samples_per_query >= 1, ErrorCode::InvalidArgument, "samples_per_query must be at least 1");
    STEVO_REQUIRE(cfg_.queries_per_step >= 1, ErrorCode::InvalidArgument, "queries_per_step must be at least 1");
    STEVO_REQUIRE(cfg_.gamma >= 0.0, ErrorCode::InvalidArgument, "gamma must be non-negative");
    STEVO_REQUIRE(cfg_.retrieve_k >= 1, ErrorCode::InvalidArgument, "retrieve_k must be at least 1");
}

StepReport Trainer::step(const std::vector<Example>& dataset) {
    STEVO_REQUIRE(!dataset.empty(), ErrorCode::InvalidArgument, "empty training set");
    const auto s = static_cast<std::uint64_t>(step_);
    StepReport rep;
    rep.step = step_ + 1;
    rep.gamma = (memory_.empty() || episodes_seen_ < cfg_.cold_start_episodes) ? 0.0 : cfg_.gamma;

    const int q = cfg_.queries_per_step;
    std::vector<std::vector<Episode>> groups;
    for (int k = 0; k < q; ++k) {
        const auto pick = derive_seed(cfg_.seed, s, static_cast<std::uint64_t>(k)) % dataset.size();
        groups.push_back(collect_episodes(dataset[pick], cfg_.samples_per_query, engine_, params_, cfg_,
                                          derive_seed(cfg_.seed ^ 0xe915ULL, s, static_cast<std::uint64_t>(k))));
    }

    Rng rng(derive_seed(cfg_.seed ^ 0x7e9ULL, s));
    const auto g = combined_gradient(groups, params_, memory_, rep.gamma, cfg_, engine_.config().flow_steps, rng);
    rep.loss_utility = g.loss_utility;
    rep.loss_reg = g.loss_reg;
    const auto& grad = g.combined;

    rep.grad_norm = std::sqrt(neural::squared_norm(grad));
    neural::adam_update(params_, grad, adam_, cfg_.adam);
    if (!neural::all_finite(params_))
        throw Error(ErrorCode::SchedulerFailure, "non-finite parameters after step " + std::to_string(rep.step));

    int total = 0;
    for (const auto& episodes : groups) {
        for (const auto& e : episodes) {
            ++total;
            rep.mean_utility += e.utility;
            rep.mean_r_sta += e.r_sta;
            if (e.failed) ++rep.failed_episodes;
            if (e.trajectory.latents.empty() || e.trajectory.latents.front().size() == 0) continue;
            const double budget = default_cost_budget(memory_, cfg_.admission);
            if (!admission_gate(e.trajectory, e.utility, e.r_sta, budget, cfg_.admission)) continue;
            ExperienceRecord rec;
            rec.key = e.query_embedding;
            rec.latents = e.trajectory.latents;
            rec.cost = static_cast<double>(std::max<long long>(1, e.token_cost));
            rec.uncertainty = e.r_sta;
            if (memory_.insert(std::move(rec)) != InsertOutcome::Rejected) ++rep.admitted;
        }
    }
    rep.mean_utility /= total;
    rep.mean_r_sta /= total;
    rep.memory_size = memory_.size();
    episodes_seen_ += total;
    ++step_;
    return rep;
}

void Trainer::run(const std::vector<Example>& dataset, const std::function<void(const StepReport&)>& on_step,
                  const std::filesystem::path& checkpoint, const std::filesystem::path& memory_path) {
    while (step_ < cfg_.steps) {
        const auto rep = step(dataset);
        if (on_step) on_step(rep);
        if (!checkpoint.empty() && cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0)
            save(checkpoint, memory_path);
    }
    if (!checkpoint.empty()) save(checkpoint, memory_path);
}

neural::Checkpoint Trainer::checkpoint() const {
    neural::Checkpoint c;
    c.params = params_;
    c.optimizer = adam_;
    c.meta = {{"step", step_}, {"episodes_seen", episodes_seen_}, {"seed", cfg_.seed}};
    return c;
}

void Trainer::resume(const neural::Checkpoint& ckpt) {
    STEVO_REQUIRE(neural::shape_of(ckpt.params) == neural::shape_of(params_), ErrorCode::ShapeMismatch,
                  "checkpoint was written for a different scheduler shape");
    params_ = ckpt.params;
    adam_ = ckpt.optimizer ? *ckpt.optimizer : neural::adam_init(params_);
    step_ = ckpt.meta.value("step", 0LL);
    episodes_seen_ = ckpt.meta.value("episodes_seen", 0LL);
}

void Trainer::save(const std::filesystem::path& checkpoint, const std::filesystem::path& memory_path) {
    // Continue from exactly what a resumed run would load.
    params_ = neural::cast_params<double>(neural::cast_params<float>(params_));
    adam_.m = neural::cast_params<double>(neural::cast_params<float>(adam_.m));
    adam_.v = neural::cast_params<double>(neural::cast_params<float>(adam_.v));
    neural::save_checkpoint(checkpoint, this->checkpoint());
    if (!memory_path.empty()) memory_.persist(memory_path);
}

}  // namespace stevo
