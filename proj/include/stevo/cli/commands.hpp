#pragma once

// The st-evo subcommands as library calls. Each returns a structured report,
// a plain-text table and the process exit code.

#include "stevo/cli/config.hpp"
#include "stevo/runtime/mock_backend.hpp"

#include <memory>
#include <optional>

namespace stevo::cli {

struct Session {
    EngineConfig cfg;
    std::shared_ptr<const Embedder> embedder;
    std::shared_ptr<runtime::AgentBackend> backend;
    std::optional<runtime::MockScenario> scenario;
    std::unique_ptr<runtime::Engine> engine;
    neural::SchedulerParams<double> params;
    std::optional<neural::Checkpoint> checkpoint;
};

// Builds embedder, backend and engine. Parameters come from the checkpoint
// (argument, else scheduler.checkpoint) or a seeded fresh initialization.
Session open_session(const EngineConfig& cfg, const std::filesystem::path& checkpoint = {});

// Appends the perturbation text to round(fraction * N) profiles (one when
// fraction is unset), starting at agent query_index mod N.
std::vector<AgentSpec> perturb_agents(const std::vector<AgentSpec>& agents, const PerturbationSettings& p,
                                      std::size_t query_index);

struct ArmOptions {
    bool no_schedule = false;
    std::optional<Adjacency> topology;  // with no_schedule; default: the anchor
    runtime::SamplingMode mode = runtime::SamplingMode::Deterministic;
    bool dump_topologies = false;
    bool perturb = false;
    int jobs = 1;
};

// {"rows": [...], "summary": {...}} for one arm over a dataset.
nlohmann::json evaluate(const Session& s, const std::vector<Example>& data, const ArmOptions& opt);

struct CommandResult {
    nlohmann::json report;
    std::string table;
    int exit_code = 0;
};

struct RunFlags {
    std::optional<std::string> query;
    std::filesystem::path dataset;
    std::filesystem::path checkpoint;
    bool deterministic = false;
    bool dump_topologies = false;
    bool no_schedule = false;
    std::optional<int> jobs;
};

struct TrainFlags {
    std::filesystem::path dataset;
    std::filesystem::path out;
    std::filesystem::path memory;
    std::filesystem::path log;
    std::filesystem::path resume;
    std::optional<double> gamma;
    std::optional<int> steps;
};

struct EvalFlags {
    std::filesystem::path dataset;
    std::filesystem::path checkpoint;
    bool deterministic = false;
    bool no_schedule = false;
    bool perturb = false;
    std::optional<double> perturb_fraction;
    bool dump_topologies = false;
    std::optional<int> jobs;
};

struct MemoryFlags {
    std::filesystem::path path;
    std::string action = "inspect";  // inspect | top | purge
    std::size_t capacity = 0;        // purge target
    std::size_t top = 10;
    double epsilon = 1e-6;
};

CommandResult cmd_run(const EngineConfig& cfg, const RunFlags& flags);
CommandResult cmd_train(const EngineConfig& cfg, const TrainFlags& flags);
CommandResult cmd_eval(const EngineConfig& cfg, const EvalFlags& flags);
CommandResult cmd_memory(const MemoryFlags& flags);

}  // namespace stevo::cli
