#include "stevo/runtime/engine.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <regex>

namespace stevo::runtime {

std::string_view to_string(TerminationReason r) {
    switch (r) {
        case TerminationReason::MaxIterations: return "max_iterations";
        case TerminationReason::StableConfident: return "stable_confident";
        case TerminationReason::EmptyTopology: return "empty_topology";
    }
    return "unknown";
}

IterationOutput execute_iteration(const ExecutionPlan& plan, const Adjacency& adjacency,
                                  std::vector<AgentSpec>& agents, const std::string& query, int iteration,
                                  const std::vector<std::string>& previous_outputs, AgentBackend& backend,
                                  const RuntimeConfig& cfg, std::uint64_t seed) {
    const int n = static_cast<int>(agents.size());
    validate_adjacency(adjacency, n);
    STEVO_REQUIRE(static_cast<int>(plan.order.size()) == n, ErrorCode::InvalidArgument,
                  "execution plan does not cover the agent set");
    STEVO_REQUIRE(previous_outputs.empty() || static_cast<int>(previous_outputs.size()) == n,
                  ErrorCode::InvalidArgument, "previous outputs do not match the agent set");
    const Adjacency rest = remaining_adjacency(adjacency, plan);

    IterationOutput out;
    out.turns.resize(static_cast<std::size_t>(n));
    out.failed.assign(static_cast<std::size_t>(n), false);
    std::vector<bool> done(static_cast<std::size_t>(n), false);

    auto build_request = [&](int j) {
        AgentBackendRequest req;
        const auto& a = agents[static_cast<std::size_t>(j)];
        req.agent_id = j;
        req.iteration = iteration;
        req.model_id = a.model_id;
        req.profile = a.profile;
        req.state = a.state;
        req.query = query;
        req.max_tokens = cfg.max_tokens;
        req.temperature = cfg.temperature;
        req.seed = derive_seed(seed, static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(j));
        for (int i = 0; i < n; ++i) {
            if (rest(i, j)) {
                STEVO_REQUIRE(done[static_cast<std::size_t>(i)], ErrorCode::InvalidArgument,
                              "plan runs agent " + std::to_string(j) + " before its in-neighbor " + std::to_string(i));
                const auto& t = out.turns[static_cast<std::size_t>(i)].text;
                if (!t.empty()) req.incoming.push_back({i, t, true});
            } else if (adjacency(i, j) && !previous_outputs.empty()) {
                const auto& t = previous_outputs[static_cast<std::size_t>(i)];
                if (!t.empty()) req.incoming.push_back({i, t, false});
            }
        }
        req.messages = assemble_messages(req.profile, req.state, req.incoming, req.query);
        return req;
    };

    auto run_one = [&backend](const AgentBackendRequest& req, AgentTurnResult& result) -> bool {
        try {
            result = backend.complete(req);
            return true;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::BackendFailure) throw;
            result = AgentTurnResult{};
            return false;
        }
    };

    const std::size_t cap = static_cast<std::size_t>(std::max(1, cfg.parallelism));
    for (const auto& level : plan.levels) {
        for (std::size_t begin = 0; begin < level.size(); begin += cap) {
            const std::size_t end = std::min(level.size(), begin + cap);
            std::vector<AgentBackendRequest> reqs;
            for (std::size_t k = begin; k < end; ++k) reqs.push_back(build_request(level[k]));
            std::vector<char> ok(reqs.size(), 0);
            if (reqs.size() == 1 || cap == 1) {
                for (std::size_t k = 0; k < reqs.size(); ++k)
                    ok[k] = run_one(reqs[k], out.turns[static_cast<std::size_t>(reqs[k].agent_id)]);
            } else {
                std::vector<std::future<bool>> futures;
                for (std::size_t k = 0; k < reqs.size(); ++k)
                    futures.push_back(std::async(std::launch::async, run_one, std::cref(reqs[k]),
                                                 std::ref(out.turns[static_cast<std::size_t>(reqs[k].agent_id)])));
                for (std::size_t k = 0; k < futures.size(); ++k) ok[k] = futures[k].get();
            }
            for (std::size_t k = 0; k < reqs.size(); ++k) {
                const auto j = static_cast<std::size_t>(reqs[k].agent_id);
                done[j] = true;
                out.failed[j] = !ok[k];
                out.token_cost += out.turns[j].token_count;
                auto& state = agents[j].state;
                if (!out.turns[j].text.empty()) state.push_back({"assistant", out.turns[j].text});
                if (state.size() > cfg.state_turns)
                    state.erase(state.begin(), state.end() - static_cast<std::ptrdiff_t>(cfg.state_turns));
            }
        }
    }
    return out;
}

bool should_terminate(int t, double r_sta_t, const Adjacency& a, int max_t, double stability_threshold) {
    STEVO_REQUIRE(t >= 1, ErrorCode::InvalidArgument, "iterations start at 1");
    return t >= max_t || a.isZero() || r_sta_t >= stability_threshold;
}

std::optional<std::string> extract_marked_answer(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto pos = lower.rfind("answer:");
    if (pos == std::string::npos) return std::nullopt;
    const auto start = pos + 7;
    const auto stop = text.find('\n', start);
    auto ans = std::string(text.substr(start, stop == std::string_view::npos ? std::string_view::npos : stop - start));
    const auto first = ans.find_first_not_of(" \t\r");
    if (first == std::string::npos) return std::string();
    ans = ans.substr(first, ans.find_last_not_of(" \t\r") - first + 1);
    return ans;
}

std::string final_answer(const std::vector<std::pair<int, std::string>>& outputs, const ExecutionPlan& plan) {
    std::vector<std::pair<int, std::string>> marked, plain;
    for (const auto& [id, text] : outputs) {
        if (const auto a = extract_marked_answer(text); a && !a->empty()) marked.emplace_back(id, *a);
        if (!normalize_answer(text).empty()) plain.emplace_back(id, text);
    }
    if (!marked.empty()) return aggregate_answers(marked, plan);
    if (!plain.empty()) return aggregate_answers(plain, plan);
    return {};
}

VerifierKind parse_verifier(std::string_view name) {
    if (name == "exact") return VerifierKind::Exact;
    if (name == "numeric") return VerifierKind::Numeric;
    throw Error(ErrorCode::ConfigError, "unknown verifier '" + std::string(name) + "'");
}

double verify(VerifierKind kind, const std::string& answer, const std::string& expected) {
    if (kind == VerifierKind::Exact) return normalize_answer(answer) == normalize_answer(expected) ? 1.0 : 0.0;
    static const std::regex number(R"([-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)");
    std::smatch a, e;
    const std::string clean_a = std::regex_replace(answer, std::regex(","), "");
    const std::string clean_e = std::regex_replace(expected, std::regex(","), "");
    if (!std::regex_search(clean_a, a, number) || !std::regex_search(clean_e, e, number)) return 0.0;
    const double x = std::stod(a.str()), y = std::stod(e.str());
    return std::abs(x - y) <= 1e-6 * std::max(1.0, std::abs(y)) ? 1.0 : 0.0;
}

Engine::Engine(std::vector<AgentSpec> agents, std::shared_ptr<const Embedder> embedder,
               std::shared_ptr<AgentBackend> backend, Adjacency anchor, RuntimeConfig cfg)
    : agents_(std::move(agents)),
      embedder_(std::move(embedder)),
      backend_(std::move(backend)),
      anchor_(std::move(anchor)),
      cfg_(cfg) {
    validate_roster(agents_);
    validate_adjacency(anchor_, static_cast<int>(agents_.size()));
    STEVO_REQUIRE(embedder_ && backend_, ErrorCode::InvalidArgument, "engine needs an embedder and a backend");
    STEVO_REQUIRE(cfg_.max_iterations >= 1, ErrorCode::InvalidArgument, "max_iterations must be positive");
    node_features_ = encode_agents(*embedder_, agents_);
}

RunResult Engine::run_query(const std::string& query, const neural::SchedulerParams<double>& params,
                            const RunOptions& opt) const {
    auto agents = opt.agents ? *opt.agents : agents_;
    validate_roster(agents);
    const int n = static_cast<int>(agents.size());
    STEVO_REQUIRE(n == static_cast<int>(agents_.size()), ErrorCode::InvalidArgument, "roster size changed");
    const int d = embedder_->dimension();

    RunResult r;
    r.node_features = opt.agents ? encode_agents(*embedder_, agents) : node_features_;
    r.query_embedding = encode_text(*embedder_, query);
    if (!opt.fixed_topology) {
        STEVO_REQUIRE(params.projection.cols() == n && params.projection.rows() == d, ErrorCode::SchedulerFailure,
                      "scheduler was built for a different agent count or embedding width");
    } else {
        validate_adjacency(*opt.fixed_topology, n);
    }

    neural::SampleOptions so;
    so.steps = cfg_.flow_steps;
    if (opt.mode == SamplingMode::Stochastic) {
        so.mode = neural::DiscretizeMode::Gumbel;
        so.noise_std = opt.noise_std;
        so.temperature = opt.gumbel_temperature;
    }

    Adjacency prev = anchor_;
    std::vector<std::string> previous_outputs;
    std::vector<double> all_entropies;
    for (int t = 1; t <= cfg_.max_iterations; ++t) {
        IterationRecord rec;
        rec.iteration = t;
        const auto cond = build_condition(r.query_embedding, t, d);
        std::optional<MatrixXd> logits;
        if (opt.fixed_topology) {
            rec.adjacency = *opt.fixed_topology;
            rec.edge_probs = rec.adjacency.cast<double>();
        } else {
            Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(t), 0x5eedULL));
            auto s = neural::sample_topology(r.node_features, prev, cond.values, params, so, rng, t);
            if (!s.latent.allFinite())
                throw Error(ErrorCode::SchedulerFailure, "scheduler produced a non-finite latent at iteration " +
                                                             std::to_string(t));
            rec.adjacency = std::move(s.topology.adjacency);
            rec.edge_probs = std::move(s.edge_probs);
            rec.latent = std::move(s.latent);
            logits = std::move(s.logits);
            rec.replay = {prev, cond.values, std::move(s.noise), rec.adjacency};
        }
        rec.plan = compile_execution_order(rec.adjacency, logits);

        auto out = execute_iteration(rec.plan, rec.adjacency, agents, query, t, previous_outputs, *backend_, cfg_,
                                     derive_seed(opt.seed, 0xa9e47ULL));
        rec.turns = std::move(out.turns);
        rec.failed = std::move(out.failed);
        rec.token_cost = out.token_cost;
        for (const auto& turn : rec.turns)
            for (const auto& dist : turn.token_distributions) rec.entropies.push_back(token_entropy(dist));
        all_entropies.insert(all_entropies.end(), rec.entropies.begin(), rec.entropies.end());
        rec.stability = score_series(rec.entropies, cfg_.stability);

        r.backend_calls += n;
        r.backend_failures += static_cast<int>(std::count(rec.failed.begin(), rec.failed.end(), true));
        r.token_cost += rec.token_cost;
        r.iteration_stability.push_back(rec.stability);
        r.trajectory.topologies.push_back({rec.adjacency, r.node_features, t});
        r.trajectory.edge_probs.push_back(rec.edge_probs);
        r.trajectory.latents.push_back(rec.latent);

        previous_outputs.clear();
        for (const auto& turn : rec.turns) previous_outputs.push_back(turn.text);
        prev = rec.adjacency;
        r.iterations.push_back(std::move(rec));

        const auto& last = r.iterations.back();
        if (should_terminate(t, last.stability.r_sta, last.adjacency, cfg_.max_iterations, cfg_.stability_threshold)) {
            if (last.stability.r_sta >= cfg_.stability_threshold)
                r.terminated_reason = TerminationReason::StableConfident;
            else if (last.adjacency.isZero())
                r.terminated_reason = TerminationReason::EmptyTopology;
            else
                r.terminated_reason = TerminationReason::MaxIterations;
            break;
        }
    }

    std::vector<std::pair<int, std::string>> outputs;
    const std::size_t from = cfg_.aggregate_all_iterations ? 0 : r.iterations.size() - 1;
    for (std::size_t k = from; k < r.iterations.size(); ++k)
        for (int i = 0; i < n; ++i) outputs.emplace_back(i, r.iterations[k].turns[static_cast<std::size_t>(i)].text);
    r.final_answer = final_answer(outputs, r.iterations.back().plan);
    r.stability = score_series(all_entropies, cfg_.stability);
    r.trajectory.stability = r.stability.r_sta;
    r.trajectory.token_cost = r.token_cost;
    return r;
}

}  // namespace stevo::runtime
