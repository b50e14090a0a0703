#pragma once

#include "stevo/error.hpp"
#include "stevo/types.hpp"

#include <array>
#include <cmath>
#include <string>

namespace stevo::neural {

// Two-layer GCN: d -> d_h -> d.
template <typename Scalar>
struct GcnParams {
    Mat<Scalar> w1, w2;
    RowVec<Scalar> b1, b2;
};

// Three-block row-wise MLP (d -> d_h -> d_h -> d); every block is layer-norm,
// AdaLN scale/shift from the condition, then linear (+ SiLU except the last).
template <typename Scalar>
struct FmNetParams {
    static constexpr int kBlocks = 3;

    Mat<Scalar> time_w;  // d_h x d_h, applied to the sinusoidal flow-time features
    RowVec<Scalar> time_b;
    std::array<Mat<Scalar>, kBlocks> mod_w;  // (d + d_h) x 2*in_l
    std::array<RowVec<Scalar>, kBlocks> mod_b;
    std::array<Mat<Scalar>, kBlocks> w;  // in_l x out_l
    std::array<RowVec<Scalar>, kBlocks> b;
};

template <typename Scalar>
struct SchedulerParams {
    GcnParams<Scalar> gcn;
    FmNetParams<Scalar> fm;
    Mat<Scalar> projection;  // d x N, latent rows -> adjacency logits
};

struct SchedulerShape {
    int agents = 4;
    int dim = 384;
    int hidden = 256;

    bool operator==(const SchedulerShape&) const = default;
};

// Calls f(name, tensor_0, tensor_1, ...) for every parameter tensor, in a fixed order.
template <typename F, typename P, typename... Ps>
void visit_tensors(F&& f, P& p, Ps&... ps) {
    f(std::string("gcn.w1"), p.gcn.w1, ps.gcn.w1...);
    f(std::string("gcn.b1"), p.gcn.b1, ps.gcn.b1...);
    f(std::string("gcn.w2"), p.gcn.w2, ps.gcn.w2...);
    f(std::string("gcn.b2"), p.gcn.b2, ps.gcn.b2...);
    f(std::string("fm.time_w"), p.fm.time_w, ps.fm.time_w...);
    f(std::string("fm.time_b"), p.fm.time_b, ps.fm.time_b...);
    for (std::size_t l = 0; l < p.fm.w.size(); ++l) {
        const std::string blk = "fm.block" + std::to_string(l);
        f(blk + ".mod_w", p.fm.mod_w[l], ps.fm.mod_w[l]...);
        f(blk + ".mod_b", p.fm.mod_b[l], ps.fm.mod_b[l]...);
        f(blk + ".w", p.fm.w[l], ps.fm.w[l]...);
        f(blk + ".b", p.fm.b[l], ps.fm.b[l]...);
    }
    f(std::string("projection"), p.projection, ps.projection...);
}

template <typename Scalar>
SchedulerShape shape_of(const SchedulerParams<Scalar>& p) {
    return SchedulerShape{static_cast<int>(p.projection.cols()), static_cast<int>(p.projection.rows()),
                          static_cast<int>(p.gcn.w1.cols())};
}

template <typename Scalar>
SchedulerParams<Scalar> zeros_like(const SchedulerParams<Scalar>& p) {
    SchedulerParams<Scalar> z = p;
    visit_tensors([](const std::string&, auto& t) { t.setZero(); }, z);
    return z;
}

template <typename Scalar>
std::size_t parameter_count(const SchedulerParams<Scalar>& p) {
    std::size_t n = 0;
    visit_tensors([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); }, p);
    return n;
}

// a += alpha * b
template <typename Scalar>
void axpy(SchedulerParams<Scalar>& a, Scalar alpha, const SchedulerParams<Scalar>& b) {
    visit_tensors([&](const std::string&, auto& x, const auto& y) { x += alpha * y; }, a, b);
}

template <typename Scalar>
void scale(SchedulerParams<Scalar>& a, Scalar alpha) {
    visit_tensors([&](const std::string&, auto& x) { x *= alpha; }, a);
}

template <typename Scalar>
Scalar squared_norm(const SchedulerParams<Scalar>& a) {
    Scalar s = 0;
    visit_tensors([&](const std::string&, const auto& x) { s += x.squaredNorm(); }, a);
    return s;
}

template <typename Scalar>
bool all_finite(const SchedulerParams<Scalar>& a) {
    bool ok = true;
    visit_tensors([&](const std::string&, const auto& x) { ok = ok && x.allFinite(); }, a);
    return ok;
}

template <typename Scalar>
SchedulerParams<Scalar> allocate_params(const SchedulerShape& s) {
    STEVO_REQUIRE(s.agents >= 1 && s.dim >= 2 && s.hidden >= 2, ErrorCode::InvalidArgument, "bad scheduler shape");
    STEVO_REQUIRE(s.dim % 2 == 0 && s.hidden % 2 == 0, ErrorCode::OddDimension,
                  "scheduler dimensions must be even (sinusoidal encodings)");
    SchedulerParams<Scalar> p;
    p.gcn.w1 = Mat<Scalar>::Zero(s.dim, s.hidden);
    p.gcn.b1 = RowVec<Scalar>::Zero(s.hidden);
    p.gcn.w2 = Mat<Scalar>::Zero(s.hidden, s.dim);
    p.gcn.b2 = RowVec<Scalar>::Zero(s.dim);
    p.fm.time_w = Mat<Scalar>::Zero(s.hidden, s.hidden);
    p.fm.time_b = RowVec<Scalar>::Zero(s.hidden);
    const std::array<int, 3> in{s.dim, s.hidden, s.hidden};
    const std::array<int, 3> out{s.hidden, s.hidden, s.dim};
    const int cond = s.dim + s.hidden;
    for (int l = 0; l < 3; ++l) {
        p.fm.mod_w[l] = Mat<Scalar>::Zero(cond, 2 * in[l]);
        p.fm.mod_b[l] = RowVec<Scalar>::Zero(2 * in[l]);
        p.fm.w[l] = Mat<Scalar>::Zero(in[l], out[l]);
        p.fm.b[l] = RowVec<Scalar>::Zero(out[l]);
    }
    p.projection = Mat<Scalar>::Zero(s.dim, s.agents);
    return p;
}

// Scaled-normal init for the GCN, the time projection, the first two trunk
// layers and the projection. AdaLN heads and the last trunk layer start at
// zero, so the initial velocity field is identically zero.
template <typename Scalar>
SchedulerParams<Scalar> init_params(const SchedulerShape& s, Rng& rng) {
    auto p = allocate_params<Scalar>(s);
    p.gcn.w1 = normal_matrix<Scalar>(s.dim, s.hidden, std::sqrt(2.0 / s.dim), rng);
    p.gcn.w2 = normal_matrix<Scalar>(s.hidden, s.dim, std::sqrt(1.0 / s.hidden), rng);
    p.fm.time_w = normal_matrix<Scalar>(s.hidden, s.hidden, std::sqrt(1.0 / s.hidden), rng);
    p.fm.w[0] = normal_matrix<Scalar>(s.dim, s.hidden, std::sqrt(1.0 / s.dim), rng);
    p.fm.w[1] = normal_matrix<Scalar>(s.hidden, s.hidden, std::sqrt(1.0 / s.hidden), rng);
    p.projection = normal_matrix<Scalar>(s.dim, s.agents, std::sqrt(1.0 / s.dim), rng);
    return p;
}

// Every tensor drawn from N(0, stddev^2); used by gradient checks to avoid the
// degenerate zero-initialized state.
template <typename Scalar>
SchedulerParams<Scalar> random_params(const SchedulerShape& s, double stddev, Rng& rng) {
    auto p = allocate_params<Scalar>(s);
    visit_tensors([&](const std::string&, auto& t) { t = normal_matrix<Scalar>(t.rows(), t.cols(), stddev, rng); }, p);
    return p;
}

template <typename To, typename From>
SchedulerParams<To> cast_params(const SchedulerParams<From>& from) {
    auto to = allocate_params<To>(shape_of(from));
    visit_tensors([](const std::string&, auto& t, const auto& f) { t = f.template cast<To>(); }, to, from);
    return to;
}

}  // namespace stevo::neural
