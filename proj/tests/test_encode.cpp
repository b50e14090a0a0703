#include "doctest.h"

#include "stevo/encode.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a macro named _res.
#include "httplib.h"
#include "json.hpp"

#include <cmath>
#include <map>
#include <thread>

using namespace stevo;

namespace {

// Independent bag-of-words oracle: FNV-1a over lower-cased alphanumeric runs.
RowVectorXd hashing_oracle(const std::string& text, int d) {
    std::map<std::string, int> counts;
    std::string tok;
    auto flush = [&] {
        if (!tok.empty()) ++counts[tok];
        tok.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            tok += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();
    RowVectorXd v = RowVectorXd::Zero(d);
    for (const auto& [t, n] : counts) {
        std::uint64_t h = 14695981039346656037ULL;
        for (unsigned char c : t) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        v(static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(d))) += (h >> 63) ? -n : n;
    }
    return v / v.norm();
}

}  // namespace

TEST_CASE("hashing embedder") {
    HashingEmbedder emb(384);
    const auto a = encode_text(emb, "Solve the equation for x");
    CHECK(a == encode_text(emb, "Solve the equation for x"));
    CHECK(std::abs(a.norm() - 1.0) < 1e-6);
    CHECK(encode_text(emb, "a b") == encode_text(emb, "b a"));
    CHECK((encode_text(emb, "Route KEY-7 to agent three!") - hashing_oracle("Route KEY-7 to agent three!", 384))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK_THROWS_AS(encode_text(emb, ""), Error);
    CHECK_THROWS_AS(encode_text(emb, "  ...  "), Error);
}

TEST_CASE("agent encoding") {
    HashingEmbedder emb(64);
    AgentSpec a{0, "mock-1", "You are a careful mathematician", {"calculator"}, {}};
    AgentSpec b = a;
    b.id = 1;
    CHECK(encode_agent(emb, a) == encode_agent(emb, b));
    b.tools = {"browser"};
    CHECK(encode_agent(emb, a) != encode_agent(emb, b));
    CHECK(encode_agent(emb, a) == hashing_oracle("mock-1 You are a careful mathematician calculator", 64));
    b.profile.clear();
    try {
        encode_agent(emb, b);
        FAIL("expected EmptyText");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyText);
    }
    const auto x = encode_agents(emb, {a, a});
    CHECK(x.rows() == 2);
    CHECK(x.cols() == 64);
}

TEST_CASE("sinusoidal encoding") {
    const auto z = sinusoidal(0, 8);
    for (int i = 0; i < 8; ++i) CHECK(z(i) == (i % 2 ? 1.0 : 0.0));
    const auto one = sinusoidal(1, 4);
    CHECK(one(0) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
    CHECK(one(1) == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
    CHECK(one(2) == doctest::Approx(std::sin(0.01)).epsilon(1e-15));
    CHECK(one(3) == doctest::Approx(std::cos(0.01)).epsilon(1e-15));
    CHECK_THROWS_AS(sinusoidal(1, 5), Error);
    for (int t = 0; t <= 50; ++t) CHECK(sinusoidal(t, 384).cwiseAbs().maxCoeff() <= 1.0);
    for (int t1 = 0; t1 <= 10; ++t1)
        for (int t2 = t1 + 1; t2 <= 10; ++t2) CHECK((sinusoidal(t1, 384) - sinusoidal(t2, 384)).norm() > 1e-3);
}

TEST_CASE("condition vector") {
    const int d = 16;
    CHECK(build_condition(RowVectorXd::Zero(d), 0).values == sinusoidal(0, d));
    Rng rng(3);
    const RowVectorXd q = normal_matrix<double>(1, d, 1.0, rng);
    const RowVectorXd b = normal_matrix<double>(1, d, 1.0, rng);
    CHECK(build_condition(q, 0).values != build_condition(q, 1).values);
    CHECK((build_condition(q, 3).values - sinusoidal(3, d) - q).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((build_condition(q + b, 2).values - (build_condition(q, 2).values + b)).cwiseAbs().maxCoeff() < 1e-14);
    try {
        build_condition(q, 1, 32);
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
}

TEST_CASE("remote embedder against a local endpoint") {
    httplib::Server server;
    nlohmann::json last_request;
    server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        last_request = nlohmann::json::parse(req.body);
        const auto text = last_request["input"][0].get<std::string>();
        nlohmann::json emb = nlohmann::json::array();
        for (int i = 0; i < 4; ++i) emb.push_back(static_cast<double>(text.size() + i));
        if (text == "wrong size") emb.push_back(0.0);
        res.set_content(nlohmann::json{{"data", {{{"embedding", emb}}}}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const std::string url = "http://127.0.0.1:" + std::to_string(port) + "/v1/embeddings";
    RemoteEmbedder remote(url, "mini", 4);
    const auto v = encode_text(remote, "abc");
    CHECK(v == (RowVectorXd(4) << 3, 4, 5, 6).finished());
    CHECK(last_request["model"] == "mini");
    try {
        encode_text(remote, "wrong size");
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
    server.stop();
    th.join();

    RemoteEmbedder dead("http://127.0.0.1:" + std::to_string(port) + "/v1/embeddings", "mini", 4, {}, 1);
    try {
        encode_text(dead, "abc");
        FAIL("expected EmbedderUnavailable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmbedderUnavailable);
    }
}
