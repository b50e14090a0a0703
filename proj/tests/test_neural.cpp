#include "doctest.h"

#include "stevo/neural/adam.hpp"
#include "stevo/neural/checkpoint.hpp"
#include "stevo/neural/flow.hpp"

#include <filesystem>
#include <fstream>

using namespace stevo;
using namespace stevo::neural;

namespace {

constexpr double kFdStep = 1e-4;
constexpr double kGradRelTol = 1e-4;

template <typename LossFn>
SchedulerParams<double> numeric_gradient(SchedulerParams<double> params, LossFn&& loss) {
    auto grad = zeros_like(params);
    visit_tensors(
        [&](const std::string&, auto& p, auto& g) {
            for (Eigen::Index i = 0; i < p.rows(); ++i) {
                for (Eigen::Index j = 0; j < p.cols(); ++j) {
                    const double keep = p(i, j);
                    p(i, j) = keep + kFdStep;
                    const double up = loss(params);
                    p(i, j) = keep - kFdStep;
                    const double down = loss(params);
                    p(i, j) = keep;
                    g(i, j) = (up - down) / (2 * kFdStep);
                }
            }
        },
        params, grad);
    return grad;
}

// Relative error per tensor, ||a - n|| / max(||a||, ||n||); tensors whose true
// gradient is identically zero must match in absolute terms.
void check_gradients(const SchedulerParams<double>& analytic, const SchedulerParams<double>& numeric) {
    visit_tensors(
        [&](const std::string& name, const auto& a, const auto& n) {
            const double scale = std::max(a.norm(), n.norm());
            const double err = (a - n).norm();
            INFO(name << " analytic=" << a.norm() << " numeric=" << n.norm() << " err=" << err);
            if (scale < 1e-9)
                CHECK(err < 1e-9);
            else
                CHECK(err / scale <= kGradRelTol);
        },
        analytic, numeric);
}

SchedulerShape small_shape() { return {3, 8, 8}; }

}  // namespace

TEST_CASE("gcn forward examples") {
    SchedulerShape s{1, 4, 4};
    auto p = allocate_params<double>(s);
    p.gcn.w1 = MatrixXd::Identity(4, 4);
    p.gcn.w2 = MatrixXd::Identity(4, 4);
    MatrixXd x(1, 4);
    x << 1.0, -2.0, 0.5, -0.1;
    const auto out = gcn_forward(x, Adjacency::Zero(1, 1), p.gcn);
    CHECK((out - x.cwiseMax(0.0)).cwiseAbs().maxCoeff() < 1e-15);

    Rng rng(1);
    const auto q = random_params<double>(small_shape(), 0.5, rng);
    CHECK(gcn_forward(MatrixXd(MatrixXd::Zero(3, 8)), anchor_topology(AnchorKind::Ring, 3), allocate_params<double>(small_shape()).gcn)
              .isZero());

    // Permuting agents permutes output rows.
    const MatrixXd x3 = normal_matrix<double>(3, 8, 1.0, rng);
    Adjacency a(3, 3);
    a << 0, 1, 0, 0, 0, 1, 1, 1, 0;
    const std::vector<int> perm{2, 0, 1};
    MatrixXd xp(3, 8);
    Adjacency ap(3, 3);
    for (int i = 0; i < 3; ++i) {
        xp.row(i) = x3.row(perm[i]);
        for (int j = 0; j < 3; ++j) ap(i, j) = a(perm[i], perm[j]);
    }
    const auto o = gcn_forward(x3, a, q.gcn);
    const auto op = gcn_forward(xp, ap, q.gcn);
    for (int i = 0; i < 3; ++i) CHECK((op.row(i) - o.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("normalized propagation") {
    Adjacency a(2, 2);
    a << 0, 1, 0, 0;
    const auto ahat = normalized_propagation<double>(a);
    // Row sums of A + I are 2 and 1.
    CHECK(ahat(0, 0) == doctest::Approx(0.5));
    CHECK(ahat(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(ahat(1, 0) == doctest::Approx(0.0));
    CHECK(ahat(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("interpolate") {
    const MatrixXd a = MatrixXd::Constant(2, 3, 1.5);
    const MatrixXd b = MatrixXd::Constant(2, 3, -4.0);
    CHECK(interpolate(a, b, 0.0) == a);
    CHECK(interpolate(a, b, 1.0) == b);
    CHECK(interpolate(MatrixXd(MatrixXd::Zero(2, 3)), MatrixXd(MatrixXd::Constant(2, 3, 2.0)), 0.5) ==
          MatrixXd::Ones(2, 3));
    CHECK_THROWS_AS(interpolate(a, b, 1.5), Error);
    CHECK_THROWS_AS(interpolate(a, MatrixXd(MatrixXd::Zero(3, 3)), 0.5), Error);
}

TEST_CASE("fmnet initial velocity is zero") {
    Rng rng(2);
    const auto p = init_params<double>(small_shape(), rng);
    for (int k = 0; k < 5; ++k) {
        const MatrixXd l = normal_matrix<double>(3, 8, 2.0, rng);
        const RowVectorXd h = normal_matrix<double>(1, 8, 1.0, rng);
        const auto v = fmnet_forward(l, uniform01(rng), h, p.fm);
        CHECK(v.rows() == 3);
        CHECK(v.cols() == 8);
        CHECK(v.isZero());
    }
    CHECK_THROWS_AS(fmnet_forward(MatrixXd(MatrixXd::Zero(3, 8)), 1.5, RowVectorXd(RowVectorXd::Zero(8)), p.fm), Error);
    CHECK_THROWS_AS(fmnet_forward(MatrixXd(MatrixXd::Zero(3, 6)), 0.5, RowVectorXd(RowVectorXd::Zero(8)), p.fm), Error);
}

TEST_CASE("fm loss degenerate cases") {
    Rng rng(3);
    const auto p = init_params<double>(small_shape(), rng);
    const MatrixXd l = normal_matrix<double>(3, 8, 1.0, rng);
    const RowVectorXd h = normal_matrix<double>(1, 8, 1.0, rng);
    CHECK(fm_loss<double>(l, l, h, p, rng).loss == 0.0);

    // Velocity forced to the target: constant field b[2] = T per row needs T
    // identical across rows.
    auto q = p;
    const RowVectorXd step = normal_matrix<double>(1, 8, 1.0, rng);
    q.fm.b[2] = step;
    const MatrixXd end = l.rowwise() + step;
    CHECK(fm_loss<double>(l, end, h, q, rng).loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fm loss gradients match finite differences") {
    Rng rng(4);
    const auto shape = small_shape();
    for (int trial = 0; trial < 3; ++trial) {
        const auto params = random_params<double>(shape, 0.4, rng);
        const MatrixXd x = normal_matrix<double>(3, 8, 1.0, rng);
        Adjacency a(3, 3);
        a << 0, 1, 0, 0, 0, 1, 1, 0, 0;
        const MatrixXd noise = normal_matrix<double>(3, 8, 0.5, rng);
        const MatrixXd end = normal_matrix<double>(3, 8, 1.0, rng);
        const RowVectorXd h = normal_matrix<double>(1, 8, 1.0, rng);
        const double p = 0.1 + 0.8 * uniform01(rng);
        for (double lw : {0.0, 1.0}) {
            const FlowLossOptions opt{lw};
            const FlowStart<double> start = GcnStart<double>{x, a, noise};
            const auto r = fm_loss_at(start, end, h, params, p, opt);
            const auto num = numeric_gradient(params, [&](const SchedulerParams<double>& q) {
                return fm_loss_at(start, end, h, q, p, opt).loss;
            });
            check_gradients(r.grad, num);
        }
    }
}

TEST_CASE("replay log-likelihood gradients match finite differences") {
    Rng rng(5);
    const auto shape = small_shape();
    const auto params = random_params<double>(shape, 0.3, rng);
    const MatrixXd x = normal_matrix<double>(3, 8, 1.0, rng);
    IterationReplay step;
    step.previous = anchor_topology(AnchorKind::Ring, 3);
    step.condition = normal_matrix<double>(1, 8, 1.0, rng);
    step.noise = normal_matrix<double>(3, 8, 0.5, rng);
    step.sampled = Adjacency::Zero(3, 3);
    step.sampled(0, 2) = step.sampled(2, 1) = 1;
    const double weight = 0.7;
    auto grad = zeros_like(params);
    const double lp = replay_logprob(x, step, params, 4, weight, &grad);
    CHECK(lp <= 0.0);
    const auto num = numeric_gradient(params, [&](const SchedulerParams<double>& q) {
        return weight * replay_logprob<double>(x, step, q, 4, 1.0, nullptr);
    });
    check_gradients(grad, num);
}

TEST_CASE("discretize") {
    Rng rng(6);
    const MatrixXd neg = MatrixXd::Constant(4, 4, -1e9);
    const auto e = discretize(neg, DiscretizeMode::Hard, 1.0, rng);
    CHECK(e.adjacency.isZero());
    CHECK(e.probs.maxCoeff() < 1e-12);
    const auto z = discretize(MatrixXd(MatrixXd::Zero(3, 3)), DiscretizeMode::Hard, 1.0, rng);
    CHECK(z.adjacency == anchor_topology(AnchorKind::Complete, 3));
    CHECK(z.probs(0, 1) == 0.5);
    const MatrixXd pos = MatrixXd::Constant(5, 5, 50.0);
    for (auto mode : {DiscretizeMode::Hard, DiscretizeMode::Gumbel}) {
        const auto d = discretize(pos, mode, 0.5, rng);
        CHECK(d.adjacency.diagonal().isZero());
        CHECK(d.probs.diagonal().isZero());
    }
    CHECK_THROWS_AS(discretize(pos, DiscretizeMode::Gumbel, 0.0, rng), Error);

    // Gumbel straight-through output is an exact Bernoulli(prob) draw.
    MatrixXd logits = MatrixXd::Zero(2, 2);
    logits(0, 1) = 0.8;
    int hits = 0;
    const int trials = 20000;
    for (int k = 0; k < trials; ++k) hits += discretize(logits, DiscretizeMode::Gumbel, 1.0, rng).adjacency(0, 1);
    const double expect = 1.0 / (1.0 + std::exp(-0.8));
    CHECK(std::abs(hits / double(trials) - expect) < 4.0 * std::sqrt(expect * (1 - expect) / trials));
}

TEST_CASE("sample topology") {
    Rng rng(7);
    const auto shape = small_shape();
    const auto params = init_params<double>(shape, rng);
    const MatrixXd x = normal_matrix<double>(3, 8, 1.0, rng);
    const RowVectorXd h = normal_matrix<double>(1, 8, 1.0, rng);
    const auto prev = anchor_topology(AnchorKind::Ring, 3);

    SampleOptions opt;
    const auto r = sample_topology(x, prev, h, params, opt, rng);
    const MatrixXd start = gcn_forward(x, prev, params.gcn);
    CHECK(r.latent == start);
    Rng unused(0);
    CHECK(r.topology.adjacency == discretize(MatrixXd(start * params.projection), DiscretizeMode::Hard, 1.0, unused).adjacency);
    Rng again(7);
    (void)init_params<double>(shape, again);
    CHECK(sample_topology(x, prev, h, params, opt, rng).topology.adjacency == r.topology.adjacency);

    // Noise passes straight through a zero field.
    opt.noise_std = 1.0;
    const auto noisy = sample_topology(x, prev, h, params, opt, rng);
    CHECK((noisy.latent - (start + noisy.noise)).cwiseAbs().maxCoeff() < 1e-12);

    // One Euler step.
    const auto q = random_params<double>(shape, 0.3, rng);
    opt = {};
    opt.steps = 1;
    const auto one = sample_topology(x, prev, h, q, opt, rng);
    const MatrixXd s0 = gcn_forward(x, prev, q.gcn);
    CHECK((one.latent - (s0 + fmnet_forward(s0, 0.0, h, q.fm))).cwiseAbs().maxCoeff() < 1e-12);

    // Constant field integrates exactly for any P.
    auto c = params;
    c.fm.b[2] = normal_matrix<double>(1, 8, 1.0, rng);
    for (int steps : {1, 3, 10, 17}) {
        opt.steps = steps;
        const auto cr = sample_topology(x, prev, h, c, opt, rng);
        CHECK((cr.latent - (start.rowwise() + c.fm.b[2])).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("trajectory log-likelihood") {
    MatrixXd half = MatrixXd::Constant(2, 2, 0.5);
    half.diagonal().setZero();
    Adjacency a = Adjacency::Zero(2, 2);
    a(0, 1) = 1;
    CHECK(trajectory_logprob({half}, {a}) == doctest::Approx(std::log(0.25)).epsilon(1e-12));
    MatrixXd exact = MatrixXd::Zero(2, 2);
    exact(0, 1) = 1.0;
    CHECK(trajectory_logprob({exact}, {a}) == doctest::Approx(2 * std::log1p(-1e-6)).epsilon(1e-12));
    CHECK(trajectory_logprob({half, half}, {a, a}) == 2 * trajectory_logprob({half}, {a}));
    CHECK_THROWS_AS(trajectory_logprob({half}, {a, a}), Error);
}

TEST_CASE("adam step") {
    Rng rng(8);
    auto p = random_params<double>(small_shape(), 0.1, rng);
    const auto before = p;
    auto g = zeros_like(p);
    g.projection.setConstant(2.0);
    auto st = adam_init(p);
    adam_update(p, g, st, AdamConfig{});
    // First step moves each coordinate by lr * sign(g).
    CHECK(((p.projection - before.projection).array() + 1e-3).abs().maxCoeff() < 1e-9);
    CHECK(p.gcn.w1 == before.gcn.w1);
    AdamConfig zero;
    zero.learning_rate = 0.0;
    const auto frozen = p;
    adam_update(p, g, st, zero);
    CHECK(p.projection == frozen.projection);
}

TEST_CASE("checkpoint round trip") {
    Rng rng(9);
    const auto path = std::filesystem::temp_directory_path() / "stevo_test_ckpt.bin";
    Checkpoint c;
    c.params = cast_params<double>(cast_params<float>(random_params<double>(small_shape(), 1.0, rng)));
    c.meta = {{"step", 12}};
    save_checkpoint(path, c);
    auto back = load_checkpoint(path);
    CHECK(!back.optimizer);
    CHECK(back.meta["step"] == 12);
    visit_tensors([](const std::string&, const auto& a, const auto& b) { CHECK(a == b); }, c.params, back.params);

    AdamState<double> st = adam_init(c.params);
    st.step = 5;
    st.m.projection.setConstant(0.25);
    st.v.gcn.b1.setConstant(4.0);
    c.optimizer = st;
    save_checkpoint(path, c);
    back = load_checkpoint(path);
    REQUIRE(back.optimizer);
    CHECK(back.optimizer->step == 5);
    CHECK(back.optimizer->m.projection == st.m.projection);
    CHECK(back.optimizer->v.gcn.b1 == st.v.gcn.b1);

    // Header bytes.
    std::ifstream f(path, std::ios::binary);
    std::string head(7, '\0');
    f.read(head.data(), 7);
    CHECK(head == "STEVO1\n");
    f.close();

    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 3);
    try {
        load_checkpoint(path);
        FAIL("expected CorruptFile");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::CorruptFile);
    }
    {
        std::ofstream bad(path, std::ios::binary | std::ios::trunc);
        bad << "NOTACHECKPOINT";
    }
    CHECK_THROWS_AS(load_checkpoint(path), Error);
    std::filesystem::remove(path);
    try {
        load_checkpoint(path);
        FAIL("expected IoFailure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoFailure);
    }
}
