#include "stevo/cli/commands.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

using namespace stevo;
using namespace stevo::cli;

namespace {

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::BackendFailure:
        case ErrorCode::EmbedderUnavailable:
            return 2;
        default:
            return 1;
    }
}

void emit(const CommandResult& r, const std::string& report, const std::string& format) {
    if (!report.empty()) {
        std::ofstream f(report);
        if (!f) throw Error(ErrorCode::IoFailure, "cannot write report " + report);
        f << r.report.dump(2) << '\n';
    }
    if (format == "json")
        std::cout << r.report.dump(2) << '\n';
    else
        std::cout << r.table;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"st-evo: multi-agent orchestration with a spatio-temporal topology scheduler"};
    app.require_subcommand(1);

    std::string config_path, report, format = "table";
    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* opt = sub->add_option("--config", config_path, "engine configuration (JSON)");
        if (need_config) opt->required();
        sub->add_option("--report", report, "write the structured report to this file");
        sub->add_option("--format", format, "stdout format")->check(CLI::IsMember({"table", "json"}));
    };

    RunFlags run;
    std::string query;
    int run_jobs = 0;
    auto* run_cmd = app.add_subcommand("run", "answer a query or a dataset");
    add_common(run_cmd, true);
    run_cmd->add_option("--query", query, "a single query");
    run_cmd->add_option("--dataset", run.dataset, "JSONL dataset of {id, query, answer}");
    run_cmd->add_option("--checkpoint", run.checkpoint, "scheduler checkpoint");
    run_cmd->add_flag("--deterministic", run.deterministic, "no latent noise, threshold discretization");
    run_cmd->add_flag("--dump-topologies", run.dump_topologies, "include per-iteration edge lists");
    run_cmd->add_flag("--no-schedule", run.no_schedule, "freeze the anchor topology");
    run_cmd->add_option("--jobs", run_jobs, "queries in flight")->check(CLI::PositiveNumber);

    TrainFlags train;
    double gamma = -1.0;
    int steps = -1;
    auto* train_cmd = app.add_subcommand("train", "train the scheduler");
    add_common(train_cmd, true);
    train_cmd->add_option("--dataset", train.dataset, "JSONL training set")->required();
    train_cmd->add_option("--out", train.out, "checkpoint to write")->required();
    train_cmd->add_option("--memory", train.memory, "experience memory file");
    train_cmd->add_option("--log", train.log, "JSONL training log");
    train_cmd->add_option("--resume", train.resume, "checkpoint to continue from");
    train_cmd->add_option("--gamma", gamma, "regularization weight")->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--steps", steps, "total step budget")->check(CLI::NonNegativeNumber);

    EvalFlags eval;
    double fraction = -1.0;
    int eval_jobs = 0;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate accuracy, cost and robustness");
    add_common(eval_cmd, true);
    eval_cmd->add_option("--dataset", eval.dataset, "JSONL dataset")->required();
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "scheduler checkpoint");
    eval_cmd->add_flag("--deterministic", eval.deterministic, "no latent noise, threshold discretization");
    eval_cmd->add_flag("--no-schedule", eval.no_schedule, "freeze the anchor topology");
    eval_cmd->add_flag("--perturb", eval.perturb, "also run with injected agent profiles");
    eval_cmd->add_option("--perturb-fraction", fraction, "fraction of agents to perturb")->check(CLI::Range(0.0, 1.0));
    eval_cmd->add_flag("--dump-topologies", eval.dump_topologies, "include per-iteration edge lists");
    eval_cmd->add_option("--jobs", eval_jobs, "queries in flight")->check(CLI::PositiveNumber);

    MemoryFlags mem;
    auto* mem_cmd = app.add_subcommand("memory", "inspect or purge an experience memory file");
    add_common(mem_cmd, false);
    mem_cmd->add_option("action", mem.action, "inspect | top | purge")->check(CLI::IsMember({"inspect", "top", "purge"}));
    mem_cmd->add_option("--path", mem.path, "memory file")->required();
    mem_cmd->add_option("--capacity", mem.capacity, "purge target");
    mem_cmd->add_option("--top", mem.top, "records listed by top");

    CLI11_PARSE(app, argc, argv);

    try {
        CommandResult r;
        if (*mem_cmd) {
            if (!config_path.empty()) mem.epsilon = load_config(config_path).memory.epsilon;
            r = cmd_memory(mem);
        } else {
            const auto cfg = load_config(config_path);
            if (*run_cmd) {
                if (!query.empty()) run.query = query;
                if (run_jobs > 0) run.jobs = run_jobs;
                r = cmd_run(cfg, run);
            } else if (*train_cmd) {
                if (gamma >= 0.0) train.gamma = gamma;
                if (steps >= 0) train.steps = steps;
                r = cmd_train(cfg, train);
            } else {
                if (fraction >= 0.0) eval.perturb_fraction = fraction;
                if (eval_jobs > 0) eval.jobs = eval_jobs;
                r = cmd_eval(cfg, eval);
            }
        }
        emit(r, report, format);
        if (r.exit_code == 2) std::cerr << "st-evo: backend failure rate above the configured threshold\n";
        return r.exit_code;
    } catch (const Error& e) {
        std::cerr << "st-evo: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "st-evo: " << e.what() << '\n';
        return 1;
    }
}
