#include "stevo/cli/config.hpp"

#include <fstream>
#include <set>

namespace stevo::cli {
namespace {

using nlohmann::json;

class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw Error(ErrorCode::ConfigError, where_ + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ConfigError, where_ + "." + key + ": " + e.what());
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& at(const char* key) const { return j_.at(key); }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw Error(ErrorCode::ConfigError, "unknown key '" + key + "' in " + where_);
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrorCode::ConfigError, msg);
}

}  // namespace

std::filesystem::path EngineConfig::resolve(const std::string& p) const {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

EngineConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    EngineConfig c;
    c.base_dir = base_dir;
    Section top(doc, "config");
    top.get("seed", c.seed);
    top.get("anchor", c.anchor);

    if (top.has("embedding")) {
        Section s(top.at("embedding"), "embedding");
        s.get("kind", c.embedding.kind);
        s.get("dim", c.embedding.dim);
        s.get("endpoint", c.embedding.endpoint);
        s.get("model", c.embedding.model);
        s.get("api_key_env", c.embedding.api_key_env);
        s.get("timeout_seconds", c.embedding.timeout_seconds);
        s.finish();
    }
    if (top.has("scheduler")) {
        Section s(top.at("scheduler"), "scheduler");
        s.get("hidden", c.scheduler.hidden);
        s.get("flow_steps", c.runtime.flow_steps);
        s.get("checkpoint", c.scheduler.checkpoint);
        s.finish();
    }
    if (top.has("runtime")) {
        Section s(top.at("runtime"), "runtime");
        s.get("max_iterations", c.runtime.max_iterations);
        s.get("stability_threshold", c.runtime.stability_threshold);
        s.get("parallelism", c.runtime.parallelism);
        s.get("state_turns", c.runtime.state_turns);
        s.get("aggregate_all_iterations", c.runtime.aggregate_all_iterations);
        s.get("max_tokens", c.runtime.max_tokens);
        s.get("temperature", c.runtime.temperature);
        s.finish();
    }
    if (top.has("stability")) {
        Section s(top.at("stability"), "stability");
        s.get("alpha", c.runtime.stability.alpha);
        s.get("beta", c.runtime.stability.beta);
        s.get("fraction", c.runtime.stability.fraction);
        s.get("pe_threshold", c.runtime.stability.pe_threshold);
        s.get("std_threshold", c.runtime.stability.std_threshold);
        s.finish();
    }
    if (top.has("trainer")) {
        Section s(top.at("trainer"), "trainer");
        auto& t = c.trainer;
        s.get("samples_per_query", t.samples_per_query);
        s.get("queries_per_step", t.queries_per_step);
        s.get("gamma", t.gamma);
        s.get("learning_rate", t.adam.learning_rate);
        s.get("beta1", t.adam.beta1);
        s.get("beta2", t.adam.beta2);
        s.get("adam_eps", t.adam.eps);
        s.get("steps", t.steps);
        s.get("cold_start_episodes", t.cold_start_episodes);
        s.get("baseline", t.baseline);
        s.get("noise_std", t.noise_std);
        s.get("gumbel_temperature", t.gumbel_temperature);
        s.get("retrieve_k", t.retrieve_k);
        s.get("latent_weight", t.flow.latent_weight);
        s.get("checkpoint_every", t.checkpoint_every);
        s.finish();
    }
    if (top.has("memory")) {
        Section s(top.at("memory"), "memory");
        s.get("capacity", c.memory.capacity);
        s.get("epsilon", c.memory.epsilon);
        s.get("path", c.memory.path);
        s.get("min_r_sta", c.trainer.admission.min_r_sta);
        s.get("cost_multiplier", c.trainer.admission.cost_multiplier);
        s.finish();
    }
    if (top.has("backend")) {
        Section s(top.at("backend"), "backend");
        s.get("kind", c.backend.kind);
        s.get("scenario", c.backend.scenario);
        s.get("endpoint", c.backend.endpoint);
        s.get("model", c.backend.model);
        s.get("api_key_env", c.backend.api_key_env);
        s.get("top_logprobs", c.backend.top_logprobs);
        s.get("timeout_seconds", c.backend.timeout_seconds);
        s.finish();
    }
    if (top.has("agents")) {
        const auto& arr = top.at("agents");
        require(arr.is_array(), "agents must be an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            Section s(arr[i], "agents[" + std::to_string(i) + "]");
            AgentSpec a;
            a.id = static_cast<int>(i);
            s.get("model_id", a.model_id);
            s.get("profile", a.profile);
            s.get("tools", a.tools);
            s.finish();
            c.agents.push_back(std::move(a));
        }
    }
    if (top.has("perturbation")) {
        Section s(top.at("perturbation"), "perturbation");
        s.get("text", c.perturbation.text);
        if (s.has("fraction") && !s.at("fraction").is_null()) {
            double f = 0.0;
            s.get("fraction", f);
            c.perturbation.fraction = f;
        }
        s.finish();
    }
    if (top.has("eval")) {
        Section s(top.at("eval"), "eval");
        s.get("sampling", c.eval.sampling);
        s.get("verifier", c.eval.verifier);
        s.get("failure_threshold", c.eval.failure_threshold);
        s.get("jobs", c.eval.jobs);
        s.finish();
    }
    top.finish();

    require(c.embedding.kind == "hashing" || c.embedding.kind == "remote", "embedding.kind must be hashing or remote");
    require(c.embedding.dim >= 2 && c.embedding.dim % 2 == 0, "embedding.dim must be even and at least 2");
    require(c.embedding.kind == "hashing" || !c.embedding.endpoint.empty(), "remote embedding needs an endpoint");
    require(c.scheduler.hidden >= 2 && c.scheduler.hidden % 2 == 0, "scheduler.hidden must be even and at least 2");
    require(c.runtime.flow_steps >= 1, "scheduler.flow_steps must be positive");
    require(c.runtime.max_iterations >= 1, "runtime.max_iterations must be positive");
    require(c.runtime.parallelism >= 1, "runtime.parallelism must be positive");
    require(c.runtime.state_turns >= 1, "runtime.state_turns must be positive");
    require(c.runtime.stability.alpha >= 0 && c.runtime.stability.beta >= 0, "stability weights must be non-negative");
    require(c.runtime.stability.fraction > 0 && c.runtime.stability.fraction <= 1, "stability.fraction must be in (0, 1]");
    require(c.trainer.samples_per_query >= 1, "trainer.samples_per_query must be at least 1");
    require(c.trainer.queries_per_step >= 1, "trainer.queries_per_step must be at least 1");
    require(c.trainer.gamma >= 0, "trainer.gamma must be non-negative");
    require(c.trainer.steps >= 0, "trainer.steps must be non-negative");
    require(c.trainer.retrieve_k >= 1, "trainer.retrieve_k must be at least 1");
    require(c.trainer.noise_std >= 0 && c.trainer.gumbel_temperature > 0, "bad trainer sampling settings");
    require(c.memory.capacity >= 1 && c.memory.epsilon > 0, "memory.capacity and memory.epsilon must be positive");
    require(c.backend.kind == "mock" || c.backend.kind == "remote", "backend.kind must be mock or remote");
    require(c.backend.kind != "mock" || !c.backend.scenario.empty(), "mock backend needs a scenario file");
    require(c.backend.kind != "remote" || !c.agents.empty(), "remote backend needs an agent roster");
    require(!c.perturbation.fraction || (*c.perturbation.fraction >= 0 && *c.perturbation.fraction <= 1),
            "perturbation.fraction must be in [0, 1]");
    require(!c.perturbation.text.empty(), "perturbation.text must not be empty");
    require(c.eval.sampling == "deterministic" || c.eval.sampling == "stochastic",
            "eval.sampling must be deterministic or stochastic");
    require(c.eval.failure_threshold >= 0 && c.eval.failure_threshold <= 1, "eval.failure_threshold must be in [0, 1]");
    require(c.eval.jobs >= 1, "eval.jobs must be positive");
    if (!c.anchor.empty()) {
        try {
            parse_anchor_kind(c.anchor);
        } catch (const Error& e) {
            throw Error(ErrorCode::ConfigError, e.what());
        }
    }
    try {
        c.trainer.verifier = runtime::parse_verifier(c.eval.verifier);
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
    c.trainer.seed = c.seed;
    return c;
}

EngineConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
    return parse_config(doc, path.parent_path());
}

json to_json(const EngineConfig& c) {
    json agents = json::array();
    for (const auto& a : c.agents) agents.push_back({{"model_id", a.model_id}, {"profile", a.profile}, {"tools", a.tools}});
    const auto& t = c.trainer;
    json doc = {
        {"seed", c.seed},
        {"embedding",
         {{"kind", c.embedding.kind},
          {"dim", c.embedding.dim},
          {"endpoint", c.embedding.endpoint},
          {"model", c.embedding.model},
          {"api_key_env", c.embedding.api_key_env},
          {"timeout_seconds", c.embedding.timeout_seconds}}},
        {"scheduler",
         {{"hidden", c.scheduler.hidden}, {"flow_steps", c.runtime.flow_steps}, {"checkpoint", c.scheduler.checkpoint}}},
        {"runtime",
         {{"max_iterations", c.runtime.max_iterations},
          {"stability_threshold", c.runtime.stability_threshold},
          {"parallelism", c.runtime.parallelism},
          {"state_turns", c.runtime.state_turns},
          {"aggregate_all_iterations", c.runtime.aggregate_all_iterations},
          {"max_tokens", c.runtime.max_tokens},
          {"temperature", c.runtime.temperature}}},
        {"stability",
         {{"alpha", c.runtime.stability.alpha},
          {"beta", c.runtime.stability.beta},
          {"fraction", c.runtime.stability.fraction},
          {"pe_threshold", c.runtime.stability.pe_threshold},
          {"std_threshold", c.runtime.stability.std_threshold}}},
        {"trainer",
         {{"samples_per_query", t.samples_per_query},
          {"queries_per_step", t.queries_per_step},
          {"gamma", t.gamma},
          {"learning_rate", t.adam.learning_rate},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"adam_eps", t.adam.eps},
          {"steps", t.steps},
          {"cold_start_episodes", t.cold_start_episodes},
          {"baseline", t.baseline},
          {"noise_std", t.noise_std},
          {"gumbel_temperature", t.gumbel_temperature},
          {"retrieve_k", t.retrieve_k},
          {"latent_weight", t.flow.latent_weight},
          {"checkpoint_every", t.checkpoint_every}}},
        {"memory",
         {{"capacity", c.memory.capacity},
          {"epsilon", c.memory.epsilon},
          {"path", c.memory.path},
          {"min_r_sta", t.admission.min_r_sta},
          {"cost_multiplier", t.admission.cost_multiplier}}},
        {"backend",
         {{"kind", c.backend.kind},
          {"scenario", c.backend.scenario},
          {"endpoint", c.backend.endpoint},
          {"model", c.backend.model},
          {"api_key_env", c.backend.api_key_env},
          {"top_logprobs", c.backend.top_logprobs},
          {"timeout_seconds", c.backend.timeout_seconds}}},
        {"anchor", c.anchor},
        {"agents", agents},
        {"perturbation",
         {{"text", c.perturbation.text},
          {"fraction", c.perturbation.fraction ? json(*c.perturbation.fraction) : json(nullptr)}}},
        {"eval",
         {{"sampling", c.eval.sampling},
          {"verifier", c.eval.verifier},
          {"failure_threshold", c.eval.failure_threshold},
          {"jobs", c.eval.jobs}}},
    };
    return doc;
}

std::vector<Example> parse_dataset(std::istream& in, const std::string& name) {
    std::vector<Example> out;
    std::set<std::string> ids;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = name + ":" + std::to_string(lineno);
        Example e;
        try {
            const auto j = json::parse(line);
            e.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
            e.query = j.at("query").get<std::string>();
            e.answer = j.at("answer").is_string() ? j.at("answer").get<std::string>() : j.at("answer").dump();
        } catch (const json::exception& ex) {
            throw Error(ErrorCode::DatasetError, where + ": " + ex.what());
        }
        if (e.query.empty()) throw Error(ErrorCode::DatasetError, where + ": empty query");
        if (!ids.insert(e.id).second) throw Error(ErrorCode::DatasetError, where + ": duplicate id '" + e.id + "'");
        out.push_back(std::move(e));
    }
    if (out.empty()) throw Error(ErrorCode::DatasetError, name + " has no records");
    return out;
}

std::vector<Example> load_dataset(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::DatasetError, "cannot open dataset " + path.string());
    return parse_dataset(f, path.string());
}

}  // namespace stevo::cli
