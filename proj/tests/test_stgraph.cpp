#include "doctest.h"

#include "stevo/stgraph.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace stevo;

namespace {

Adjacency from_edges(int n, std::initializer_list<std::pair<int, int>> edges) {
    Adjacency a = Adjacency::Zero(n, n);
    for (auto [i, j] : edges) a(i, j) = 1;
    return a;
}

Adjacency random_adjacency(int n, double density, Rng& rng) {
    Adjacency a = Adjacency::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && uniform01(rng) < density) a(i, j) = 1;
    return a;
}

bool order_respects(const Adjacency& a, const std::vector<int>& order) {
    for (std::size_t i = 0; i < order.size(); ++i)
        for (std::size_t j = i + 1; j < order.size(); ++j)
            if (a(order[j], order[i])) return false;
    return true;
}

// Brute force: a graph is acyclic iff some permutation respects every edge.
bool acyclic_by_permutation(const Adjacency& a) {
    std::vector<int> perm(static_cast<std::size_t>(a.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    do {
        if (order_respects(a, perm)) return true;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return false;
}

}  // namespace

TEST_CASE("validate_adjacency") {
    CHECK_NOTHROW(validate_adjacency(MatrixXd(MatrixXd::Zero(2, 2)), 2));
    MatrixXd pair(2, 2);
    pair << 0, 1, 1, 0;
    CHECK_NOTHROW(validate_adjacency(pair, 2));
    MatrixXd loop(2, 2);
    loop << 1, 0, 0, 0;
    try {
        validate_adjacency(loop, 2);
        FAIL("expected SelfLoop");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SelfLoop);
    }
    MatrixXd half = MatrixXd::Zero(2, 2);
    half(0, 1) = 0.5;
    try {
        validate_adjacency(half, 2);
        FAIL("expected NonBinaryEntry");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonBinaryEntry);
    }
    try {
        validate_adjacency(MatrixXd(MatrixXd::Zero(2, 3)), 2);
        FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
}

TEST_CASE("anchor presets") {
    const auto ring = anchor_topology(AnchorKind::Ring, 4);
    CHECK(edge_list(ring) == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}, {3, 0}});
    CHECK(anchor_topology(AnchorKind::Empty, 3) == Adjacency::Zero(3, 3));
    const auto complete = anchor_topology(AnchorKind::Complete, 3);
    CHECK(edge_count(complete) == 6);
    CHECK(complete.diagonal().sum() == 0);
    const auto star = anchor_topology(AnchorKind::Star, 4);
    for (int j = 1; j < 4; ++j) CHECK((star(0, j) == 1 && star(j, 0) == 1));
    CHECK(edge_count(star) == 6);
    CHECK(edge_count(anchor_topology(AnchorKind::Chain, 5)) == 4);
    CHECK(edge_count(anchor_topology(AnchorKind::Tree, 7)) == 6);
    for (int n = 1; n <= 8; ++n)
        for (auto k : {AnchorKind::Chain, AnchorKind::Ring, AnchorKind::Star, AnchorKind::Tree, AnchorKind::Complete,
                       AnchorKind::Empty})
            CHECK(is_valid_adjacency(anchor_topology(k, n), n));
    CHECK_THROWS_AS(anchor_topology(AnchorKind::Ring, 0), Error);
    CHECK(parse_anchor_kind("star") == AnchorKind::Star);
    CHECK_THROWS_AS(parse_anchor_kind("mesh"), Error);
}

TEST_CASE("compile chain, ring and empty") {
    const auto chain = compile_execution_order(from_edges(3, {{0, 1}, {1, 2}}));
    CHECK(chain.order == std::vector<int>{0, 1, 2});
    CHECK(chain.levels == std::vector<std::vector<int>>{{0}, {1}, {2}});
    CHECK(chain.removed_edges.empty());

    const auto ring = compile_execution_order(anchor_topology(AnchorKind::Ring, 4));
    CHECK(ring.removed_edges == std::vector<std::pair<int, int>>{{0, 1}});
    CHECK(ring.order == std::vector<int>{1, 2, 3, 0});

    const auto empty = compile_execution_order(Adjacency::Zero(3, 3));
    CHECK(empty.order == std::vector<int>{0, 1, 2});
    CHECK(empty.levels == std::vector<std::vector<int>>{{0, 1, 2}});
}

TEST_CASE("cycle breaking follows the lowest logit") {
    MatrixXd logits = MatrixXd::Zero(4, 4);
    logits(0, 1) = 3.0;
    logits(1, 2) = 2.0;
    logits(2, 3) = -1.0;
    logits(3, 0) = 1.0;
    const auto plan = compile_execution_order(anchor_topology(AnchorKind::Ring, 4), logits);
    CHECK(plan.removed_edges == std::vector<std::pair<int, int>>{{2, 3}});
    CHECK(plan.order == std::vector<int>{3, 0, 1, 2});
}

TEST_CASE("ring compile removes exactly one edge") {
    for (int n = 2; n <= 12; ++n) CHECK(compile_execution_order(anchor_topology(AnchorKind::Ring, n)).removed_edges.size() == 1);
}

TEST_CASE("random compile respects the order constraint") {
    Rng rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 7);
        const auto a = random_adjacency(n, uniform01(rng), rng);
        const auto plan = compile_execution_order(a);
        std::vector<int> sorted = plan.order;
        std::sort(sorted.begin(), sorted.end());
        std::vector<int> iota(static_cast<std::size_t>(n));
        std::iota(iota.begin(), iota.end(), 0);
        REQUIRE(sorted == iota);
        const auto rest = remaining_adjacency(a, plan);
        CHECK(order_respects(rest, plan.order));
        CHECK(acyclic_by_permutation(rest));

        std::vector<int> level_of(static_cast<std::size_t>(n), -1);
        for (std::size_t l = 0; l < plan.levels.size(); ++l)
            for (int v : plan.levels[l]) level_of[static_cast<std::size_t>(v)] = static_cast<int>(l);
        for (auto [i, j] : edge_list(rest)) CHECK(level_of[static_cast<std::size_t>(i)] < level_of[static_cast<std::size_t>(j)]);

        if (acyclic_by_permutation(a)) CHECK(plan.removed_edges.empty());
    }
}

TEST_CASE("aggregate answers") {
    ExecutionPlan plan;
    plan.order = {0, 1, 2};
    CHECK(aggregate_answers({{0, "A"}, {1, "A"}, {2, "B"}}, plan) == "a");
    ExecutionPlan rev;
    rev.order = {1, 0};
    CHECK(aggregate_answers({{0, "A"}, {1, "B"}}, rev) == "b");
    CHECK(aggregate_answers({{0, "A"}}, plan) == "a");
    CHECK_THROWS_AS(aggregate_answers({}, plan), Error);
    CHECK(normalize_answer("  Hello \t  World\n") == "hello world");
}

TEST_CASE("aggregate answers is permutation invariant") {
    Rng rng(5);
    const std::vector<std::string> pool{"x", "y", "z"};
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 6);
        ExecutionPlan plan;
        plan.order.resize(static_cast<std::size_t>(n));
        std::iota(plan.order.begin(), plan.order.end(), 0);
        std::shuffle(plan.order.begin(), plan.order.end(), rng);
        std::vector<std::pair<int, std::string>> answers;
        for (int i = 0; i < n; ++i) answers.emplace_back(i, pool[rng() % pool.size()]);
        const auto expected = aggregate_answers(answers, plan);
        std::shuffle(answers.begin(), answers.end(), rng);
        CHECK(aggregate_answers(answers, plan) == expected);
    }
}

TEST_CASE("roster validation") {
    std::vector<AgentSpec> agents{{0, "m", "p0", {}, {}}, {1, "m", "p1", {}, {}}};
    CHECK_NOTHROW(validate_roster(agents));
    agents[1].id = 2;
    CHECK_THROWS_AS(validate_roster(agents), Error);
    agents[1].id = 1;
    agents[1].profile.clear();
    CHECK_THROWS_AS(validate_roster(agents), Error);
}
