#pragma once

#include "stevo/neural/params.hpp"

namespace stevo::neural {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
    SchedulerParams<Scalar> m;
    SchedulerParams<Scalar> v;
    long long step = 0;
};

template <typename Scalar>
AdamState<Scalar> adam_init(const SchedulerParams<Scalar>& params) {
    return AdamState<Scalar>{zeros_like(params), zeros_like(params), 0};
}

template <typename Scalar>
void adam_update(SchedulerParams<Scalar>& params, const SchedulerParams<Scalar>& grad, AdamState<Scalar>& state,
                 const AdamConfig& cfg) {
    ++state.step;
    const Scalar b1 = static_cast<Scalar>(cfg.beta1);
    const Scalar b2 = static_cast<Scalar>(cfg.beta2);
    const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
    const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
    const Scalar lr = static_cast<Scalar>(cfg.learning_rate);
    const Scalar eps = static_cast<Scalar>(cfg.eps);
    visit_tensors(
        [&](const std::string&, auto& p, const auto& g, auto& m, auto& v) {
            m = b1 * m + (Scalar(1) - b1) * g;
            v = (b2 * v.array() + (Scalar(1) - b2) * g.array().square()).matrix();
            p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
        },
        params, grad, state.m, state.v);
}

}  // namespace stevo::neural
