#include "doctest.h"

#include "stevo/stability.hpp"
#include "stevo/types.hpp"

#include <cmath>

using namespace stevo;

namespace {

TokenDistribution uniform(int k) {
    TokenDistribution d;
    for (int i = 0; i < k; ++i) d.probs.emplace_back("t" + std::to_string(i), 1.0 / k);
    return d;
}

}  // namespace

TEST_CASE("token entropy closed forms") {
    CHECK(token_entropy({{{"a", 1.0}}, 0.0}) == 0.0);
    CHECK(token_entropy(uniform(2)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(token_entropy(uniform(4)) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    const double confident = -0.99 * std::log(0.99) - 0.01 * std::log(0.01);
    CHECK(token_entropy({{{"a", 0.99}}, 0.01}) == doctest::Approx(confident).epsilon(1e-12));
    CHECK(std::abs(confident - 0.056) < 1e-3);
    CHECK_THROWS_AS(token_entropy({{{"a", 0.5}}, 0.0}), Error);
    CHECK_THROWS_AS(token_entropy({{{"a", -0.5}, {"b", 1.5}}, 0.0}), Error);
    CHECK_THROWS_AS(token_entropy({}), Error);
}

TEST_CASE("uniform maximizes entropy on a fixed support") {
    Rng rng(1);
    for (int k = 2; k <= 8; ++k) {
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> w(static_cast<std::size_t>(k));
            double s = 0;
            for (auto& x : w) s += (x = 0.01 + uniform01(rng));
            TokenDistribution d;
            for (int i = 0; i < k; ++i) d.probs.emplace_back("t", w[static_cast<std::size_t>(i)] / s);
            CHECK(token_entropy(d) <= std::log(static_cast<double>(k)) + 1e-12);
        }
    }
}

TEST_CASE("high-entropy selection") {
    const std::vector<double> s{0.1, 0.9, 0.5};
    CHECK(select_high_entropy(s, 1.0) == s);
    CHECK(select_high_entropy(s, 0.34) == std::vector<double>{0.9, 0.5});
    CHECK(select_high_entropy(s, 0.2) == std::vector<double>{0.9});
    const std::vector<double> flat(10, 0.3);
    CHECK(select_high_entropy(flat, 0.15).size() == 2);
    std::vector<double> twenty(20);
    for (int i = 0; i < 20; ++i) twenty[static_cast<std::size_t>(i)] = i;
    CHECK(select_high_entropy(twenty, 0.15) == std::vector<double>{17, 18, 19});
    CHECK_THROWS_AS(select_high_entropy({}, 0.5), Error);
    CHECK_THROWS_AS(select_high_entropy(s, 0.0), Error);
}

TEST_CASE("predictive entropy and varentropy") {
    const double ln2 = std::log(2.0);
    CHECK(predictive_entropy({0, 0, 0}) == 0.0);
    CHECK(predictive_entropy({ln2, ln2}) == doctest::Approx(ln2).epsilon(1e-12));
    CHECK(predictive_entropy({0, 2 * ln2}) == doctest::Approx(ln2).epsilon(1e-12));
    CHECK(varentropy({0.4, 0.4, 0.4}) == 0.0);
    CHECK(varentropy({0, 2}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_THROWS_AS(predictive_entropy({}), Error);
    CHECK_THROWS_AS(varentropy({}), Error);
    Rng rng(2);
    std::vector<double> s(30);
    for (auto& x : s) x = 3 * uniform01(rng);
    CHECK(varentropy(s) <= 0.0);
    CHECK(predictive_entropy(select_high_entropy(s, 1.0)) == predictive_entropy(s));
}

TEST_CASE("stability reward") {
    CHECK(stability_reward(0, 0, 1, 1) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(stability_reward(2, 0, 1, 1) == doctest::Approx(-3.0).epsilon(1e-12));
    CHECK(stability_reward(0, -0.95, 1, 1) == doctest::Approx(-10.0).epsilon(1e-12));
    CHECK_THROWS_AS(stability_reward(0, 0, -1, 1), Error);
    Rng rng(3);
    for (int k = 0; k < 1000; ++k) {
        const double pe = 5 * uniform01(rng), ve = -3 * uniform01(rng);
        const double alpha = 0.01 + 2 * uniform01(rng), beta = 2 * uniform01(rng);
        const double r = stability_reward(pe, ve, alpha, beta);
        CHECK(r <= 0.0);
        CHECK(stability_reward(pe + 0.1, ve, alpha, beta) < r);
    }
}

TEST_CASE("state taxonomy") {
    CHECK(classify_state(0.05, -0.01, 0.5, 0.3) == SystemState::Deterministic);
    CHECK(classify_state(1.5, -1.0, 0.5, 0.3) == SystemState::Branching);
    CHECK(classify_state(1.5, -0.01, 0.5, 0.3) == SystemState::Cluelessness);
    CHECK(classify_state(0.05, -1.0, 0.5, 0.3) == SystemState::OverconfidentAnomaly);
}

TEST_CASE("series scoring") {
    StabilityConfig cfg;
    const auto s = score_series(std::vector<double>(20, std::log(4.0)), cfg);
    CHECK(s.pe == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(s.ve == 0.0);
    CHECK(s.r_sta == doctest::Approx(-(std::log(4.0) + 1.0)).epsilon(1e-12));
    CHECK(s.state == SystemState::Cluelessness);
    const auto empty = score_series({}, cfg);
    CHECK(empty.r_sta == doctest::Approx(-10.0).epsilon(1e-12));
}
