#include "doctest.h"

#include "stevo/cli/commands.hpp"

#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <unistd.h>

using namespace stevo;
using namespace stevo::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = STEVO_SOURCE_DIR;

fs::path temp_dir(const std::string& tag) {
    auto d = fs::temp_directory_path() / ("stevo_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

EngineConfig bandit() { return load_config(kRoot / "configs" / "bandit.json"); }

std::optional<ErrorCode> code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

std::vector<Example> parse(const std::string& text) {
    std::istringstream in(text);
    return parse_dataset(in);
}

}  // namespace

TEST_CASE("config round trip and strictness") {
    const auto cfg = bandit();
    const auto doc = to_json(cfg);
    CHECK(to_json(parse_config(doc, cfg.base_dir)) == doc);
    CHECK(cfg.trainer.steps == 500);
    CHECK(cfg.scheduler.hidden == 32);

    auto typo = doc;
    typo["trainer"]["stepz"] = 3;
    CHECK(code_of([&] { parse_config(typo); }) == ErrorCode::ConfigError);
    auto top = doc;
    top["sed"] = 1;
    CHECK(code_of([&] { parse_config(top); }) == ErrorCode::ConfigError);
    auto wrong_type = doc;
    wrong_type["seed"] = "seven";
    CHECK(code_of([&] { parse_config(wrong_type); }) == ErrorCode::ConfigError);
    CHECK(code_of([] { load_config("/nonexistent/config.json"); }) == ErrorCode::ConfigError);
}

TEST_CASE("dataset validation") {
    const auto ok = parse("{\"id\": \"a\", \"query\": \"q\", \"answer\": \"1\"}\n\n{\"id\": \"b\", \"query\": \"r\", \"answer\": \"2\"}\n");
    REQUIRE(ok.size() == 2);
    CHECK(ok[1].answer == "2");
    CHECK(code_of([] { parse("{\"id\": \"a\", \"query\": \"q\"}\n"); }) == ErrorCode::DatasetError);
    CHECK(code_of([] { parse("{\"id\": \"a\", \"query\": \"\", \"answer\": \"1\"}\n"); }) == ErrorCode::DatasetError);
    CHECK(code_of([] { parse("not json\n"); }) == ErrorCode::DatasetError);
    CHECK(code_of([] {
              parse("{\"id\": \"a\", \"query\": \"q\", \"answer\": \"1\"}\n{\"id\": \"a\", \"query\": \"r\", \"answer\": \"1\"}\n");
          }) == ErrorCode::DatasetError);
    CHECK(code_of([] { parse("\n"); }) == ErrorCode::DatasetError);
    CHECK(code_of([] { load_dataset("/nonexistent.jsonl"); }) == ErrorCode::DatasetError);
}

TEST_CASE("run over a ten-query dataset") {
    const auto dir = temp_dir("run");
    const auto all = load_dataset(kRoot / "data" / "bandit_heldout.jsonl");
    {
        std::ofstream f(dir / "ten.jsonl");
        for (std::size_t i = 0; i < 10; ++i)
            f << json{{"id", all[i].id}, {"query", all[i].query}, {"answer", all[i].answer}}.dump() << '\n';
    }
    RunFlags rf;
    rf.dataset = dir / "ten.jsonl";
    rf.dump_topologies = true;
    const auto r = cmd_run(bandit(), rf);
    CHECK(r.exit_code == 0);
    REQUIRE(r.report["rows"].size() == 10);
    for (const auto& row : r.report["rows"]) {
        CHECK(row.contains("answer"));
        CHECK(row.contains("token_cost"));
        CHECK(row.contains("topologies"));
    }
    CHECK(r.report["summary"]["accuracy"].is_number());

    RunFlags single;
    single.query = "what is the key?";
    CHECK(cmd_run(bandit(), single).report["rows"].size() == 1);
    single.dataset = dir / "ten.jsonl";
    CHECK(code_of([&] { cmd_run(bandit(), single); }) == ErrorCode::ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("deterministic runs are byte-identical") {
    RunFlags rf;
    rf.dataset = kRoot / "data" / "bandit_heldout.jsonl";
    rf.deterministic = true;
    rf.dump_topologies = true;
    const auto a = cmd_run(bandit(), rf);
    const auto b = cmd_run(bandit(), rf);
    CHECK(a.report.dump() == b.report.dump());
    CHECK(a.table == b.table);
    CHECK(a.report["sampling"] == "deterministic");
}

TEST_CASE("memory inspect, top and purge") {
    const auto dir = temp_dir("mem");
    TrainFlags tf;
    tf.dataset = kRoot / "data" / "bandit_train.jsonl";
    tf.out = dir / "s.ckpt";
    tf.steps = 40;
    const auto trained = cmd_train(bandit(), tf);
    CHECK(trained.report["steps"].size() == 40);
    const auto path = dir / "s.ckpt.mem";
    REQUIRE(fs::exists(path));

    MemoryFlags mf;
    mf.path = path;
    const auto inspect = cmd_memory(mf);
    const auto size = inspect.report["size"].get<std::size_t>();
    REQUIRE(size >= 3);
    CHECK(inspect.report["records"].size() == size);

    mf.action = "top";
    mf.top = 2;
    const auto top = cmd_memory(mf);
    REQUIRE(top.report["records"].size() == 2);
    double best = 0.0;
    for (const auto& r : inspect.report["records"]) best = std::max(best, r["score"].get<double>());
    CHECK(top.report["records"][0]["score"].get<double>() == best);
    CHECK(top.report["records"][0]["score"] >= top.report["records"][1]["score"]);

    mf.action = "purge";
    mf.capacity = 2;
    CHECK(cmd_memory(mf).report["size"] == 2);
    mf.action = "inspect";
    const auto after = cmd_memory(mf);
    CHECK(after.report["size"] == 2);
    double kept = 1e300;
    for (const auto& r : after.report["records"]) kept = std::min(kept, r["score"].get<double>());
    CHECK(kept >= top.report["records"][1]["score"].get<double>());

    mf.action = "purge";
    mf.capacity = 0;
    CHECK(code_of([&] { cmd_memory(mf); }) == ErrorCode::ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("perturbation with fraction zero changes nothing") {
    EvalFlags ef;
    ef.dataset = kRoot / "data" / "robustness_heldout.jsonl";
    const auto cfg = load_config(kRoot / "configs" / "robustness.json");
    const auto plain = cmd_eval(cfg, ef);
    ef.perturb = true;
    ef.perturb_fraction = 0.0;
    const auto zero = cmd_eval(cfg, ef);
    CHECK(zero.report["perturbed"]["rows"] == plain.report["clean"]["rows"]);
    CHECK(zero.report["clean"] == plain.report["clean"]);
    CHECK(zero.report["accuracy_drop"].get<double>() == 0.0);

    ef.perturb_fraction = 1.5;
    CHECK(code_of([&] { cmd_eval(cfg, ef); }) == ErrorCode::ConfigError);
}
