#pragma once

// Latent flow matching over graph embeddings: interpolation path, training
// loss with exact gradients, Euler sampling, Bernoulli discretization and
// trajectory likelihoods.

#include "stevo/neural/fmnet.hpp"
#include "stevo/neural/gcn.hpp"
#include "stevo/stgraph.hpp"

#include <algorithm>
#include <optional>
#include <variant>
#include <vector>

namespace stevo::neural {

inline constexpr double kProbClamp = 1e-6;

template <typename Scalar>
Mat<Scalar> interpolate(const Mat<Scalar>& start, const Mat<Scalar>& end, Scalar p) {
    STEVO_REQUIRE(start.rows() == end.rows() && start.cols() == end.cols(), ErrorCode::ShapeMismatch,
                  "interpolation endpoints differ in shape");
    STEVO_REQUIRE(p >= Scalar(0) && p <= Scalar(1), ErrorCode::POutOfRange, "p must lie in [0, 1]");
    return p * end + (Scalar(1) - p) * start;
}

// Start point of a flow: either a fixed latent or GCN(X, A) + noise, in which
// case gradients also reach the GCN.
template <typename Scalar>
struct GcnStart {
    Mat<Scalar> node_features;
    Adjacency adjacency;
    Mat<Scalar> noise;  // empty means no noise
};

template <typename Scalar>
using FlowStart = std::variant<Mat<Scalar>, GcnStart<Scalar>>;

struct FlowLossOptions {
    // Weight of the unprojected ||V - (L_end - L_start)||^2 term. Zero gives the
    // purely projected objective; the projection alone leaves the component of
    // the velocity outside the column space of W unconstrained.
    double latent_weight = 1.0;
};

template <typename Scalar>
struct FlowLossResult {
    Scalar loss = 0;
    Scalar p = 0;
    SchedulerParams<Scalar> grad;
};

namespace detail {

template <typename Scalar>
struct ResolvedStart {
    Mat<Scalar> latent;
    std::optional<GcnTrace<Scalar>> trace;
};

template <typename Scalar>
ResolvedStart<Scalar> resolve_start(const FlowStart<Scalar>& start, const GcnParams<Scalar>& gcn) {
    ResolvedStart<Scalar> r;
    if (const auto* fixed = std::get_if<Mat<Scalar>>(&start)) {
        r.latent = *fixed;
    } else {
        const auto& g = std::get<GcnStart<Scalar>>(start);
        r.trace = gcn_trace(g.node_features, g.adjacency, gcn);
        r.latent = r.trace->out;
        if (g.noise.size() > 0) {
            STEVO_REQUIRE(g.noise.rows() == r.latent.rows() && g.noise.cols() == r.latent.cols(),
                          ErrorCode::ShapeMismatch, "noise shape differs from latent shape");
            r.latent += g.noise;
        }
    }
    return r;
}

}  // namespace detail

// Loss at a given flow time p: ||(V - T) W||^2 + latent_weight * ||V - T||^2
// with T = L_end - L_start and V = FM-Net(interpolate(L_start, L_end, p), p, H).
template <typename Scalar>
FlowLossResult<Scalar> fm_loss_at(const FlowStart<Scalar>& start, const Mat<Scalar>& end, const RowVec<Scalar>& h,
                                  const SchedulerParams<Scalar>& params, Scalar p,
                                  const FlowLossOptions& opt = {}) {
    const auto s = detail::resolve_start(start, params.gcn);
    STEVO_REQUIRE(s.latent.rows() == end.rows() && s.latent.cols() == end.cols(), ErrorCode::ShapeMismatch,
                  "flow endpoints differ in shape");
    STEVO_REQUIRE(end.rows() == params.projection.cols(), ErrorCode::ShapeMismatch,
                  "latent rows must equal the number of agents");

    const Mat<Scalar> lp = interpolate(s.latent, end, p);
    const auto trace = fmnet_trace(lp, p, h, params.fm);
    const Mat<Scalar> residual = trace.velocity - (end - s.latent);
    const Mat<Scalar> projected = residual * params.projection;
    const Scalar lw = static_cast<Scalar>(opt.latent_weight);

    FlowLossResult<Scalar> r;
    r.p = p;
    r.loss = projected.squaredNorm() + lw * residual.squaredNorm();
    r.grad = zeros_like(params);
    r.grad.projection = Scalar(2) * residual.transpose() * projected;
    const Mat<Scalar> d_residual = Scalar(2) * projected * params.projection.transpose() + Scalar(2) * lw * residual;
    const Mat<Scalar> d_lp = fmnet_backward(trace, d_residual, params.fm, r.grad.fm);
    if (s.trace) {
        const Mat<Scalar> d_start = (Scalar(1) - p) * d_lp + d_residual;
        gcn_backward(*s.trace, d_start, params.gcn, r.grad.gcn);
    }
    return r;
}

// Samples p ~ U[0, 1] from rng, then evaluates fm_loss_at.
template <typename Scalar>
FlowLossResult<Scalar> fm_loss(const FlowStart<Scalar>& start, const Mat<Scalar>& end, const RowVec<Scalar>& h,
                               const SchedulerParams<Scalar>& params, Rng& rng, const FlowLossOptions& opt = {}) {
    return fm_loss_at(start, end, h, params, static_cast<Scalar>(uniform01(rng)), opt);
}

template <typename Scalar>
struct FlowPath {
    Mat<Scalar> start;
    std::vector<FmTrace<Scalar>> steps;
    Mat<Scalar> end;
};

// P explicit Euler steps: L <- L + FM-Net(L, j/P, H) / P for j = 0..P-1.
template <typename Scalar>
FlowPath<Scalar> integrate_flow_traced(const Mat<Scalar>& start, const RowVec<Scalar>& h,
                                       const FmNetParams<Scalar>& fm, int steps) {
    STEVO_REQUIRE(steps >= 1, ErrorCode::InvalidArgument, "need at least one integration step");
    FlowPath<Scalar> path;
    path.start = start;
    path.steps.reserve(static_cast<std::size_t>(steps));
    const Scalar dp = Scalar(1) / Scalar(steps);
    Mat<Scalar> l = start;
    for (int j = 0; j < steps; ++j) {
        path.steps.push_back(fmnet_trace(l, Scalar(j) * dp, h, fm));
        l += dp * path.steps.back().velocity;
    }
    path.end = std::move(l);
    return path;
}

template <typename Scalar>
Mat<Scalar> integrate_flow(const Mat<Scalar>& start, const RowVec<Scalar>& h, const FmNetParams<Scalar>& fm,
                           int steps) {
    STEVO_REQUIRE(steps >= 1, ErrorCode::InvalidArgument, "need at least one integration step");
    const Scalar dp = Scalar(1) / Scalar(steps);
    Mat<Scalar> l = start;
    for (int j = 0; j < steps; ++j) l += dp * fmnet_forward(l, Scalar(j) * dp, h, fm);
    return l;
}

// Gradient of a scalar with respect to the start latent, given its gradient at
// the endpoint; accumulates FM-Net parameter gradients along the way.
template <typename Scalar>
Mat<Scalar> integrate_flow_backward(const FlowPath<Scalar>& path, const Mat<Scalar>& d_end,
                                    const FmNetParams<Scalar>& fm, FmNetParams<Scalar>& grad) {
    const Scalar dp = Scalar(1) / Scalar(path.steps.size());
    Mat<Scalar> d_l = d_end;
    for (auto it = path.steps.rbegin(); it != path.steps.rend(); ++it) {
        const Mat<Scalar> d_v = dp * d_l;
        d_l += fmnet_backward(*it, d_v, fm, grad);
    }
    return d_l;
}

enum class DiscretizeMode { Hard, Gumbel };

struct Discretized {
    Adjacency adjacency;
    MatrixXd probs;
};

// probs = sigmoid(logits) with a zero diagonal. Hard: edge iff prob >= 0.5.
// Gumbel: logistic-noise relaxed Bernoulli with a straight-through hard output,
// which makes each edge an exact Bernoulli(prob) draw.
template <typename Scalar>
Discretized discretize(const Mat<Scalar>& logits, DiscretizeMode mode, double temperature, Rng& rng) {
    STEVO_REQUIRE(logits.rows() == logits.cols(), ErrorCode::ShapeMismatch, "logits must be square");
    STEVO_REQUIRE(mode == DiscretizeMode::Hard || temperature > 0.0, ErrorCode::InvalidArgument,
                  "gumbel temperature must be positive");
    const auto n = logits.rows();
    Discretized out;
    out.probs = sigmoid(logits.template cast<double>().array()).matrix();
    out.adjacency = Adjacency::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) {
                out.probs(i, j) = 0.0;
                continue;
            }
            if (mode == DiscretizeMode::Hard) {
                out.adjacency(i, j) = out.probs(i, j) >= 0.5 ? 1 : 0;
            } else {
                const double u = uniform_open01(rng);
                const double noise = std::log(u) - std::log1p(-u);
                const double relaxed = 1.0 / (1.0 + std::exp(-(static_cast<double>(logits(i, j)) + noise) / temperature));
                out.adjacency(i, j) = relaxed >= 0.5 ? 1 : 0;
            }
        }
    }
    return out;
}

template <typename Scalar>
struct SampleResult {
    Topology topology;
    MatrixXd edge_probs;
    Mat<Scalar> latent;  // final L-hat, before projection
    Mat<Scalar> logits;
    Mat<Scalar> noise;
};

struct SampleOptions {
    int steps = 10;
    DiscretizeMode mode = DiscretizeMode::Hard;
    double temperature = 1.0;
    double noise_std = 0.0;
};

// Draws noise, starts the flow at GCN(X, A_prev) + noise, integrates, projects
// and discretizes.
template <typename Scalar>
SampleResult<Scalar> sample_topology(const Mat<Scalar>& node_features, const Adjacency& prev,
                                     const RowVec<Scalar>& condition, const SchedulerParams<Scalar>& params,
                                     const SampleOptions& opt, Rng& rng, int iteration = 0) {
    STEVO_REQUIRE(opt.steps >= 1, ErrorCode::InvalidArgument, "need at least one integration step");
    const auto n = node_features.rows();
    STEVO_REQUIRE(params.projection.cols() == n, ErrorCode::ShapeMismatch,
                  "scheduler was built for " + std::to_string(params.projection.cols()) + " agents, got " +
                      std::to_string(n));
    SampleResult<Scalar> r;
    r.noise = opt.noise_std > 0.0 ? normal_matrix<Scalar>(n, params.projection.rows(), opt.noise_std, rng)
                                  : Mat<Scalar>::Zero(n, params.projection.rows());
    const Mat<Scalar> start = gcn_forward(node_features, prev, params.gcn) + r.noise;
    r.latent = integrate_flow(start, condition, params.fm, opt.steps);
    r.logits = r.latent * params.projection;
    auto disc = discretize(r.logits, opt.mode, opt.temperature, rng);
    r.topology.adjacency = std::move(disc.adjacency);
    r.topology.node_features = node_features.template cast<double>();
    r.topology.iteration = iteration;
    r.edge_probs = std::move(disc.probs);
    return r;
}

// Bernoulli log-likelihood of one adjacency under edge probabilities, off-diagonal only.
inline double adjacency_logprob(const MatrixXd& probs, const Adjacency& a) {
    STEVO_REQUIRE(probs.rows() == a.rows() && probs.cols() == a.cols(), ErrorCode::ShapeMismatch,
                  "probabilities and adjacency differ in shape");
    double lp = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (i == j) continue;
            const double p = std::clamp(probs(i, j), kProbClamp, 1.0 - kProbClamp);
            lp += a(i, j) ? std::log(p) : std::log1p(-p);
        }
    }
    return lp;
}

inline double trajectory_logprob(const std::vector<MatrixXd>& edge_probs, const std::vector<Adjacency>& topologies) {
    STEVO_REQUIRE(edge_probs.size() == topologies.size(), ErrorCode::LengthMismatch,
                  "edge probabilities and topologies differ in length");
    double lp = 0.0;
    for (std::size_t t = 0; t < edge_probs.size(); ++t) lp += adjacency_logprob(edge_probs[t], topologies[t]);
    return lp;
}

// Everything needed to recompute one iteration's sampling probabilities with
// fresh parameters.
struct IterationReplay {
    Adjacency previous;
    RowVectorXd condition;
    MatrixXd noise;
    Adjacency sampled;
};

// Recomputes log P(sampled | previous) under params and accumulates
// weight * d(log P)/d(params) into grad. Returns log P.
template <typename Scalar>
Scalar replay_logprob(const Mat<Scalar>& node_features, const IterationReplay& step,
                      const SchedulerParams<Scalar>& params, int flow_steps, Scalar weight,
                      SchedulerParams<Scalar>* grad) {
    const auto gt = gcn_trace(node_features, step.previous, params.gcn);
    const Mat<Scalar> start = gt.out + step.noise.template cast<Scalar>();
    const RowVec<Scalar> h = step.condition.template cast<Scalar>();
    const auto path = integrate_flow_traced(start, h, params.fm, flow_steps);
    const Mat<Scalar> logits = path.end * params.projection;
    const auto n = logits.rows();

    Scalar logp = 0;
    Mat<Scalar> d_logits = Mat<Scalar>::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const Scalar prob = Scalar(1) / (Scalar(1) + std::exp(-logits(i, j)));
            const bool clamped = prob < Scalar(kProbClamp) || prob > Scalar(1 - kProbClamp);
            const Scalar pc = std::clamp(prob, Scalar(kProbClamp), Scalar(1 - kProbClamp));
            const bool edge = step.sampled(i, j) != 0;
            logp += edge ? std::log(pc) : std::log1p(-pc);
            if (!clamped) d_logits(i, j) = (edge ? Scalar(1) : Scalar(0)) - prob;
        }
    }
    if (grad) {
        d_logits *= weight;
        grad->projection.noalias() += path.end.transpose() * d_logits;
        const Mat<Scalar> d_end = d_logits * params.projection.transpose();
        const Mat<Scalar> d_start = integrate_flow_backward(path, d_end, params.fm, grad->fm);
        gcn_backward(gt, d_start, params.gcn, grad->gcn);
    }
    return logp;
}

}  // namespace stevo::neural
