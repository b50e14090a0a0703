#pragma once

#include "stevo/encode.hpp"
#include "stevo/neural/params.hpp"

#include <array>

namespace stevo::neural {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kFlowTimeScale = 1000.0;

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
    using S = typename Derived::Scalar;
    return (S(1) + (-x).exp()).inverse();
}

template <typename Scalar>
Mat<Scalar> silu(const Mat<Scalar>& x) {
    return (x.array() * sigmoid(x.array())).matrix();
}

template <typename Scalar>
Mat<Scalar> silu_grad(const Mat<Scalar>& x) {
    const auto s = sigmoid(x.array()).eval();
    return (s * (Scalar(1) + x.array() * (Scalar(1) - s))).matrix();
}

template <typename Scalar>
struct FmBlockTrace {
    Mat<Scalar> z;        // layer-normalized input
    Mat<Scalar> rstd;     // N x 1
    RowVec<Scalar> scale;
    RowVec<Scalar> shift;
    Mat<Scalar> m;        // modulated input
    Mat<Scalar> y;        // pre-activation output
};

template <typename Scalar>
struct FmTrace {
    Scalar p = 0;
    Mat<Scalar> time_features;  // 1 x d_h
    Mat<Scalar> time_pre;       // 1 x d_h
    Mat<Scalar> cond;           // 1 x (d + d_h), before SiLU
    Mat<Scalar> cond_act;
    std::array<FmBlockTrace<Scalar>, 3> blocks;
    Mat<Scalar> velocity;
};

template <typename Scalar>
FmTrace<Scalar> fmnet_trace(const Mat<Scalar>& lp, Scalar p, const RowVec<Scalar>& h, const FmNetParams<Scalar>& prm) {
    const auto d = prm.w[0].rows();
    const auto dh = prm.time_w.rows();
    STEVO_REQUIRE(lp.cols() == d, ErrorCode::ShapeMismatch, "latent width does not match FM-Net input");
    STEVO_REQUIRE(h.size() == d, ErrorCode::ShapeMismatch, "condition width does not match FM-Net input");
    STEVO_REQUIRE(p >= Scalar(0) && p <= Scalar(1), ErrorCode::POutOfRange, "flow time must lie in [0, 1]");

    FmTrace<Scalar> t;
    t.p = p;
    t.time_features = sinusoidal<Scalar>(kFlowTimeScale * static_cast<double>(p), static_cast<int>(dh));
    t.time_pre = t.time_features * prm.time_w + prm.time_b;
    t.cond.resize(1, d + dh);
    t.cond << h, silu(t.time_pre);
    t.cond_act = silu(t.cond);

    Mat<Scalar> x = lp;
    for (int l = 0; l < 3; ++l) {
        auto& b = t.blocks[l];
        const auto width = prm.w[l].rows();
        const RowVec<Scalar> mod = t.cond_act * prm.mod_w[l] + prm.mod_b[l];
        b.scale = mod.head(width);
        b.shift = mod.tail(width);

        const auto mean = x.rowwise().mean().eval();
        const Mat<Scalar> centered = x.colwise() - mean;
        const auto var = (centered.array().square().rowwise().sum() / Scalar(width)).eval();
        b.rstd = (var + Scalar(kLayerNormEps)).rsqrt().matrix();
        b.z = centered.array().colwise() * b.rstd.col(0).array();
        b.m = (b.z.array().rowwise() * (Scalar(1) + b.scale.array())).matrix().rowwise() + b.shift;
        b.y = (b.m * prm.w[l]).rowwise() + prm.b[l];
        x = l < 2 ? silu(b.y) : b.y;
    }
    t.velocity = std::move(x);
    return t;
}

template <typename Scalar>
Mat<Scalar> fmnet_forward(const Mat<Scalar>& lp, Scalar p, const RowVec<Scalar>& h, const FmNetParams<Scalar>& prm) {
    return fmnet_trace(lp, p, h, prm).velocity;
}

// Accumulates parameter gradients for upstream d_velocity and returns the
// gradient with respect to the latent input.
template <typename Scalar>
Mat<Scalar> fmnet_backward(const FmTrace<Scalar>& t, const Mat<Scalar>& d_velocity, const FmNetParams<Scalar>& prm,
                           FmNetParams<Scalar>& grad) {
    Mat<Scalar> d_y = d_velocity;
    Mat<Scalar> d_cond_act = Mat<Scalar>::Zero(1, t.cond_act.cols());
    Mat<Scalar> d_x;
    for (int l = 2; l >= 0; --l) {
        const auto& b = t.blocks[l];
        const auto width = static_cast<Scalar>(prm.w[l].rows());
        grad.w[l].noalias() += b.m.transpose() * d_y;
        grad.b[l] += d_y.colwise().sum();
        const Mat<Scalar> d_m = d_y * prm.w[l].transpose();

        RowVec<Scalar> d_mod(2 * prm.w[l].rows());
        d_mod << d_m.cwiseProduct(b.z).colwise().sum(), d_m.colwise().sum();
        grad.mod_w[l].noalias() += t.cond_act.transpose() * d_mod;
        grad.mod_b[l] += d_mod;
        d_cond_act.noalias() += d_mod * prm.mod_w[l].transpose();

        const Mat<Scalar> d_z = d_m.array().rowwise() * (Scalar(1) + b.scale.array());
        const auto mean_dz = (d_z.rowwise().sum() / width).eval();
        const auto mean_dz_z = (d_z.cwiseProduct(b.z).rowwise().sum() / width).eval();
        d_x = ((d_z.colwise() - mean_dz).array() - b.z.array().colwise() * mean_dz_z.col(0).array()).colwise() *
              b.rstd.col(0).array();
        if (l > 0) d_y = d_x.cwiseProduct(silu_grad(t.blocks[l - 1].y));
    }

    const Mat<Scalar> d_cond = d_cond_act.cwiseProduct(silu_grad(t.cond));
    const auto dh = prm.time_w.rows();
    const Mat<Scalar> d_time_pre = d_cond.rightCols(dh).cwiseProduct(silu_grad(t.time_pre));
    grad.time_w.noalias() += t.time_features.transpose() * d_time_pre;
    grad.time_b += d_time_pre;
    return d_x;
}

}  // namespace stevo::neural
