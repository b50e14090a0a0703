#include "stevo/cli/commands.hpp"

#include "stevo/runtime/openai_backend.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

namespace stevo::cli {
namespace {

using nlohmann::json;

std::string env_or(const std::string& name, const std::string& fallback = {}) {
    if (name.empty()) return fallback;
    const char* v = std::getenv(name.c_str());
    return v ? std::string(v) : fallback;
}

json edges_json(const std::vector<std::pair<int, int>>& edges) {
    json out = json::array();
    for (auto [i, j] : edges) out.push_back({i, j});
    return out;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string summary_line(const std::string& label, const json& s) {
    std::string line = label + ": " + std::to_string(s["queries"].get<int>()) + " queries";
    if (!s["accuracy"].is_null()) line += ", accuracy " + fmt("%.4f", s["accuracy"].get<double>());
    line += ", mean tokens " + fmt("%.1f", s["mean_tokens"].get<double>());
    line += ", mean e^R_sta " + fmt("%.4f", s["mean_confidence"].get<double>());
    line += ", backend failures " + std::to_string(s["backend_failures"].get<int>());
    return line + "\n";
}

std::string rows_table(const json& arm) {
    std::string t;
    char buf[512];
    std::snprintf(buf, sizeof buf, "%-12s %-8s %7s %5s %-17s %s\n", "id", "correct", "tokens", "iter", "stop", "answer");
    t += buf;
    for (const auto& r : arm["rows"]) {
        const std::string correct = r["correct"].is_null() ? "-" : (r["correct"].get<bool>() ? "yes" : "no");
        std::snprintf(buf, sizeof buf, "%-12s %-8s %7lld %5d %-17s %s\n", r["id"].get<std::string>().c_str(),
                      correct.c_str(), r["token_cost"].get<long long>(), r["iterations"].get<int>(),
                      r["terminated"].get<std::string>().c_str(), r["answer"].get<std::string>().c_str());
        t += buf;
    }
    return t;
}

int failure_exit(const EngineConfig& cfg, const json& summary) {
    const int calls = summary["backend_calls"].get<int>();
    const int failures = summary["backend_failures"].get<int>();
    return calls > 0 && static_cast<double>(failures) / calls > cfg.eval.failure_threshold ? 2 : 0;
}

runtime::SamplingMode sampling_of(const EngineConfig& cfg, bool deterministic) {
    return deterministic || cfg.eval.sampling == "deterministic" ? runtime::SamplingMode::Deterministic
                                                                 : runtime::SamplingMode::Stochastic;
}

}  // namespace

Session open_session(const EngineConfig& cfg, const std::filesystem::path& checkpoint) {
    Session s;
    s.cfg = cfg;
    if (cfg.embedding.kind == "hashing") {
        s.embedder = std::make_shared<HashingEmbedder>(cfg.embedding.dim);
    } else {
        s.embedder = std::make_shared<RemoteEmbedder>(cfg.embedding.endpoint, cfg.embedding.model, cfg.embedding.dim,
                                                      env_or(cfg.embedding.api_key_env), cfg.embedding.timeout_seconds);
    }

    std::vector<AgentSpec> agents = cfg.agents;
    std::string anchor = cfg.anchor;
    if (cfg.backend.kind == "mock") {
        s.scenario = runtime::load_scenario(cfg.resolve(cfg.backend.scenario));
        if (agents.empty()) agents = s.scenario->agent_specs();
        if (anchor.empty()) anchor = s.scenario->anchor;
        s.backend = std::make_shared<runtime::MockBackend>(*s.scenario);
    } else {
        runtime::OpenAiConfig oc;
        oc.endpoint = cfg.backend.endpoint.empty() ? env_or("STEVO_CHAT_ENDPOINT") : cfg.backend.endpoint;
        oc.model = cfg.backend.model;
        oc.api_key = env_or(cfg.backend.api_key_env);
        oc.top_logprobs = cfg.backend.top_logprobs;
        oc.timeout_seconds = cfg.backend.timeout_seconds;
        if (oc.endpoint.empty()) throw Error(ErrorCode::ConfigError, "no chat endpoint configured");
        s.backend = std::make_shared<runtime::OpenAiBackend>(oc);
    }
    if (anchor.empty()) anchor = "ring";
    AnchorKind kind;
    try {
        kind = parse_anchor_kind(anchor);
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
    const int n = static_cast<int>(agents.size());
    s.engine = std::make_unique<runtime::Engine>(agents, s.embedder, s.backend, anchor_topology(kind, n), cfg.runtime);

    const neural::SchedulerShape shape{n, cfg.embedding.dim, cfg.scheduler.hidden};
    const auto ckpt_path = checkpoint.empty() ? cfg.resolve(cfg.scheduler.checkpoint) : checkpoint;
    if (!ckpt_path.empty()) {
        s.checkpoint = neural::load_checkpoint(ckpt_path);
        if (neural::shape_of(s.checkpoint->params) != shape)
            throw Error(ErrorCode::ConfigError, "checkpoint " + ckpt_path.string() + " does not match the configured shape");
        s.params = s.checkpoint->params;
    } else {
        Rng rng(derive_seed(cfg.seed, 0x1417ULL));
        s.params = neural::init_params<double>(shape, rng);
    }
    return s;
}

std::vector<AgentSpec> perturb_agents(const std::vector<AgentSpec>& agents, const PerturbationSettings& p,
                                      std::size_t query_index) {
    auto out = agents;
    const std::size_t n = agents.size();
    const std::size_t count =
        p.fraction ? static_cast<std::size_t>(std::llround(*p.fraction * static_cast<double>(n))) : std::size_t{1};
    for (std::size_t k = 0; k < std::min(count, n); ++k) {
        auto& a = out[(query_index + k) % n];
        a.profile += "\n" + p.text;
    }
    return out;
}

json evaluate(const Session& s, const std::vector<Example>& data, const ArmOptions& opt) {
    const auto& engine = *s.engine;
    auto run_one = [&](std::size_t i) {
        runtime::RunOptions ro;
        ro.seed = derive_seed(s.cfg.seed, static_cast<std::uint64_t>(i));
        ro.mode = opt.mode;
        ro.noise_std = s.cfg.trainer.noise_std;
        ro.gumbel_temperature = s.cfg.trainer.gumbel_temperature;
        if (opt.no_schedule) ro.fixed_topology = opt.topology ? *opt.topology : engine.anchor();
        if (opt.perturb) ro.agents = perturb_agents(engine.agents(), s.cfg.perturbation, i);
        return engine.run_query(data[i].query, s.params, ro);
    };

    std::vector<runtime::RunResult> results(data.size());
    const std::size_t jobs = static_cast<std::size_t>(std::max(1, opt.jobs));
    for (std::size_t begin = 0; begin < data.size(); begin += jobs) {
        const std::size_t end = std::min(data.size(), begin + jobs);
        if (jobs == 1) {
            results[begin] = run_one(begin);
            continue;
        }
        std::vector<std::future<runtime::RunResult>> fs;
        for (std::size_t i = begin; i < end; ++i) fs.push_back(std::async(std::launch::async, run_one, i));
        for (std::size_t i = begin; i < end; ++i) results[i] = fs[i - begin].get();
    }

    json rows = json::array();
    int graded = 0, correct = 0, calls = 0, failures = 0;
    long long tokens = 0;
    double confidence = 0.0, iterations = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& r = results[i];
        json row = {
            {"id", data[i].id},
            {"answer", r.final_answer},
            {"expected", data[i].answer},
            {"token_cost", r.token_cost},
            {"iterations", static_cast<int>(r.iterations.size())},
            {"terminated", std::string(runtime::to_string(r.terminated_reason))},
            {"r_sta", r.stability.r_sta},
            {"confidence", std::exp(r.stability.r_sta)},
            {"backend_failures", r.backend_failures},
        };
        if (data[i].answer.empty()) {
            row["correct"] = nullptr;
        } else {
            const bool ok = runtime::verify(s.cfg.trainer.verifier, r.final_answer, data[i].answer) > 0.0;
            row["correct"] = ok;
            ++graded;
            correct += ok ? 1 : 0;
        }
        json stab = json::array();
        for (std::size_t t = 0; t < r.iterations.size(); ++t) {
            const auto& sc = r.iterations[t].stability;
            stab.push_back({{"iteration", t + 1},
                            {"pe", sc.pe},
                            {"ve", sc.ve},
                            {"r_sta", sc.r_sta},
                            {"state", std::string(to_string(sc.state))}});
        }
        row["stability"] = stab;
        if (opt.dump_topologies) {
            json topo = json::array();
            for (const auto& it : r.iterations)
                topo.push_back({{"iteration", it.iteration},
                                {"edges", edges_json(edge_list(it.adjacency))},
                                {"removed", edges_json(it.plan.removed_edges)},
                                {"order", it.plan.order}});
            row["topologies"] = topo;
        }
        rows.push_back(row);
        tokens += r.token_cost;
        confidence += std::exp(r.stability.r_sta);
        iterations += static_cast<double>(r.iterations.size());
        calls += r.backend_calls;
        failures += r.backend_failures;
    }
    const double n = static_cast<double>(data.size());
    json summary = {
        {"queries", static_cast<int>(data.size())},
        {"graded", graded},
        {"correct", correct},
        {"accuracy", graded ? json(static_cast<double>(correct) / graded) : json(nullptr)},
        {"total_tokens", tokens},
        {"mean_tokens", static_cast<double>(tokens) / n},
        {"mean_confidence", confidence / n},
        {"mean_iterations", iterations / n},
        {"backend_calls", calls},
        {"backend_failures", failures},
    };
    return {{"rows", rows}, {"summary", summary}};
}

CommandResult cmd_run(const EngineConfig& cfg, const RunFlags& flags) {
    std::vector<Example> data;
    if (flags.query) {
        if (!flags.dataset.empty()) throw Error(ErrorCode::ConfigError, "give either a query or a dataset, not both");
        if (flags.query->empty()) throw Error(ErrorCode::DatasetError, "empty query");
        data.push_back({"query", *flags.query, ""});
    } else {
        if (flags.dataset.empty()) throw Error(ErrorCode::ConfigError, "run needs --query or --dataset");
        data = load_dataset(flags.dataset);
    }
    const auto session = open_session(cfg, flags.checkpoint);
    ArmOptions opt;
    opt.no_schedule = flags.no_schedule;
    opt.mode = flags.deterministic ? runtime::SamplingMode::Deterministic : runtime::SamplingMode::Stochastic;
    opt.dump_topologies = flags.dump_topologies;
    opt.jobs = flags.jobs.value_or(cfg.eval.jobs);
    auto arm = evaluate(session, data, opt);

    CommandResult res;
    res.report = {{"command", "run"},
                  {"arm", flags.no_schedule ? "static" : "scheduled"},
                  {"sampling", flags.deterministic ? "deterministic" : "stochastic"},
                  {"seed", cfg.seed},
                  {"rows", arm["rows"]},
                  {"summary", arm["summary"]}};
    res.table = rows_table(arm) + summary_line(flags.no_schedule ? "static" : "scheduled", arm["summary"]);
    res.exit_code = failure_exit(cfg, arm["summary"]);
    return res;
}

CommandResult cmd_train(const EngineConfig& cfg, const TrainFlags& flags) {
    if (flags.dataset.empty()) throw Error(ErrorCode::ConfigError, "train needs --dataset");
    if (flags.out.empty()) throw Error(ErrorCode::ConfigError, "train needs --out");
    const auto data = load_dataset(flags.dataset);
    EngineConfig c = cfg;
    if (flags.gamma) c.trainer.gamma = *flags.gamma;
    if (flags.steps) c.trainer.steps = *flags.steps;
    if (c.trainer.gamma < 0) throw Error(ErrorCode::ConfigError, "gamma must be non-negative");
    const auto session = open_session(c, flags.resume);

    std::filesystem::path memory_path = flags.memory;
    if (memory_path.empty()) memory_path = c.resolve(c.memory.path);
    if (memory_path.empty()) memory_path = flags.out.string() + ".mem";

    MemoryStore memory(c.memory.capacity, c.memory.epsilon);
    if (!flags.resume.empty() && std::filesystem::exists(memory_path))
        memory = MemoryStore::load(memory_path, c.memory.capacity, c.memory.epsilon);
    Trainer trainer(*session.engine, session.params, std::move(memory), c.trainer);
    if (session.checkpoint) trainer.resume(*session.checkpoint);

    std::ofstream log;
    if (!flags.log.empty()) {
        log.open(flags.log, flags.resume.empty() ? std::ios::trunc : std::ios::app);
        if (!log) throw Error(ErrorCode::IoFailure, "cannot open log " + flags.log.string());
    }
    const long long start = trainer.steps_done();
    json steps = json::array();
    int failed = 0, episodes = 0;
    trainer.run(
        data,
        [&](const StepReport& r) {
            const auto rec = to_json(r);
            if (log) log << rec.dump() << '\n' << std::flush;
            failed += r.failed_episodes;
            episodes += c.trainer.samples_per_query * c.trainer.queries_per_step;
            steps.push_back(rec);
        },
        flags.out, memory_path);

    CommandResult res;
    res.report = {{"command", "train"},
                  {"seed", c.seed},
                  {"start_step", start},
                  {"end_step", trainer.steps_done()},
                  {"memory_size", trainer.memory().size()},
                  {"checkpoint", flags.out.filename().string()},
                  {"memory", memory_path.filename().string()},
                  {"steps", steps}};
    res.table = "trained steps " + std::to_string(start) + " -> " + std::to_string(trainer.steps_done()) +
                ", memory " + std::to_string(trainer.memory().size()) + " records\n";
    if (!steps.empty()) {
        const auto& last = steps.back();
        res.table += "last step: mean utility " + fmt("%.4f", last["mean_utility"].get<double>()) + ", loss_utility " +
                     fmt("%.6f", last["loss_utility"].get<double>()) + ", loss_reg " +
                     fmt("%.6f", last["loss_reg"].get<double>()) + "\n";
    }
    res.exit_code = episodes > 0 && static_cast<double>(failed) / episodes > c.eval.failure_threshold ? 2 : 0;
    return res;
}

CommandResult cmd_eval(const EngineConfig& cfg, const EvalFlags& flags) {
    if (flags.dataset.empty()) throw Error(ErrorCode::ConfigError, "eval needs --dataset");
    const auto data = load_dataset(flags.dataset);
    EngineConfig c = cfg;
    if (flags.perturb_fraction) {
        if (*flags.perturb_fraction < 0 || *flags.perturb_fraction > 1)
            throw Error(ErrorCode::ConfigError, "perturb fraction must be in [0, 1]");
        c.perturbation.fraction = *flags.perturb_fraction;
    }
    const auto session = open_session(c, flags.checkpoint);
    ArmOptions opt;
    opt.no_schedule = flags.no_schedule;
    opt.mode = sampling_of(c, flags.deterministic);
    opt.dump_topologies = flags.dump_topologies;
    opt.jobs = flags.jobs.value_or(c.eval.jobs);
    const auto clean = evaluate(session, data, opt);
    const std::string arm = flags.no_schedule ? "static" : "scheduled";

    CommandResult res;
    res.report = {{"command", "eval"},
                  {"arm", arm},
                  {"sampling", opt.mode == runtime::SamplingMode::Deterministic ? "deterministic" : "stochastic"},
                  {"seed", c.seed},
                  {"clean", clean}};
    res.table = rows_table(clean) + summary_line(arm + " (clean)", clean["summary"]);
    res.exit_code = failure_exit(c, clean["summary"]);
    if (flags.perturb) {
        opt.perturb = true;
        const auto attacked = evaluate(session, data, opt);
        res.report["perturbed"] = attacked;
        res.report["perturbation"] = {
            {"text", c.perturbation.text},
            {"fraction", c.perturbation.fraction ? json(*c.perturbation.fraction) : json(nullptr)}};
        const auto& a0 = clean["summary"]["accuracy"];
        const auto& a1 = attacked["summary"]["accuracy"];
        res.report["accuracy_drop"] = a0.is_null() ? json(nullptr) : json(a0.get<double>() - a1.get<double>());
        res.table += summary_line(arm + " (perturbed)", attacked["summary"]);
        if (!a0.is_null()) res.table += "accuracy drop " + fmt("%.4f", res.report["accuracy_drop"].get<double>()) + "\n";
        res.exit_code = std::max(res.exit_code, failure_exit(c, attacked["summary"]));
    }
    return res;
}

CommandResult cmd_memory(const MemoryFlags& flags) {
    MemoryStore store;
    const bool blank = std::filesystem::exists(flags.path) && std::filesystem::file_size(flags.path) == 0;
    if (!blank) store = MemoryStore::load(flags.path, 1, flags.epsilon);

    auto records = store.records();
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (flags.action == "top") {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return retention_score(records[a], flags.epsilon) > retention_score(records[b], flags.epsilon);
        });
        if (idx.size() > flags.top) idx.resize(flags.top);
    } else if (flags.action == "purge") {
        if (flags.capacity < 1) throw Error(ErrorCode::ConfigError, "purge needs a capacity of at least 1");
        store.purge(flags.capacity);
        if (!blank || !records.empty()) store.persist(flags.path);
        records = store.records();
        idx.resize(records.size());
        std::iota(idx.begin(), idx.end(), 0);
    } else if (flags.action != "inspect") {
        throw Error(ErrorCode::ConfigError, "unknown memory action '" + flags.action + "'");
    }

    json list = json::array();
    std::string table;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-6s %-10s %12s %12s %8s %14s\n", "index", "iterations", "cost", "uncertainty",
                  "access", "score");
    table += buf;
    for (std::size_t i : idx) {
        const auto& r = records[i];
        const double score = retention_score(r, flags.epsilon);
        list.push_back({{"index", i},
                        {"iterations", r.latents.size()},
                        {"cost", r.cost},
                        {"uncertainty", r.uncertainty},
                        {"access_count", r.access_count},
                        {"score", score}});
        std::snprintf(buf, sizeof buf, "%-6zu %-10zu %12.1f %12.6f %8llu %14.6g\n", i, r.latents.size(), r.cost,
                      r.uncertainty, static_cast<unsigned long long>(r.access_count), score);
        table += buf;
    }
    CommandResult res;
    res.report = {{"command", "memory"}, {"action", flags.action}, {"size", store.size()}, {"records", list}};
    res.table = table;
    return res;
}

}  // namespace stevo::cli
