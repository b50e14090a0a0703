#pragma once

#include "stevo/neural/params.hpp"

namespace stevo::neural {

// D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I. Self-connections are
// added for message passing only; the topology itself stays loop-free.
template <typename Scalar>
Mat<Scalar> normalized_propagation(const Adjacency& a) {
    const auto n = a.rows();
    Mat<Scalar> ahat = a.cast<Scalar>();
    ahat.diagonal().array() += Scalar(1);
    const RowVec<Scalar> inv_sqrt_deg = ahat.rowwise().sum().transpose().array().rsqrt();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) ahat(i, j) *= inv_sqrt_deg(i) * inv_sqrt_deg(j);
    return ahat;
}

template <typename Scalar>
struct GcnTrace {
    Mat<Scalar> ahat;
    Mat<Scalar> ax;   // Â X
    Mat<Scalar> z1;   // pre-activation of layer 1
    Mat<Scalar> ah1;  // Â ReLU(z1)
    Mat<Scalar> out;
};

template <typename Scalar>
GcnTrace<Scalar> gcn_trace(const Mat<Scalar>& x, const Adjacency& a, const GcnParams<Scalar>& p) {
    STEVO_REQUIRE(a.rows() == x.rows() && a.cols() == x.rows(), ErrorCode::ShapeMismatch,
                  "adjacency must be N x N for N feature rows");
    STEVO_REQUIRE(x.cols() == p.w1.rows(), ErrorCode::ShapeMismatch, "node feature width does not match GCN input");
    GcnTrace<Scalar> t;
    t.ahat = normalized_propagation<Scalar>(a);
    t.ax = t.ahat * x;
    t.z1 = (t.ax * p.w1).rowwise() + p.b1;
    t.ah1 = t.ahat * t.z1.cwiseMax(Scalar(0));
    t.out = (t.ah1 * p.w2).rowwise() + p.b2;
    return t;
}

template <typename Scalar>
Mat<Scalar> gcn_forward(const Mat<Scalar>& x, const Adjacency& a, const GcnParams<Scalar>& p) {
    return gcn_trace(x, a, p).out;
}

// Accumulates parameter gradients for upstream gradient d_out.
template <typename Scalar>
void gcn_backward(const GcnTrace<Scalar>& t, const Mat<Scalar>& d_out, const GcnParams<Scalar>& p,
                  GcnParams<Scalar>& grad) {
    grad.w2.noalias() += t.ah1.transpose() * d_out;
    grad.b2 += d_out.colwise().sum();
    const Mat<Scalar> d_h1 = t.ahat.transpose() * (d_out * p.w2.transpose());
    const Mat<Scalar> d_z1 = d_h1.cwiseProduct((t.z1.array() > Scalar(0)).matrix().template cast<Scalar>());
    grad.w1.noalias() += t.ax.transpose() * d_z1;
    grad.b1 += d_z1.colwise().sum();
}

}  // namespace stevo::neural
