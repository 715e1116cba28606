#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "polca/engine.hpp"
#include "polca/error.hpp"
#include "polca/llm.hpp"
#include "polca/oracles.hpp"

namespace polca {

enum class OracleKind { synthetic, llm };

inline OracleKind oracle_kind_from_string(const std::string& s) {
    if (s == "synthetic") return OracleKind::synthetic;
    if (s == "llm") return OracleKind::llm;
    throw ConfigError("unknown oracle kind '" + s + "' (expected synthetic or llm)");
}

// Everything a run needs: the search knobs plus the oracle sections.
struct RunConfig {
    SearchConfig search;
    OracleKind oracle = OracleKind::synthetic;
    SyntheticEnvConfig env;
    LlmEndpointConfig llm_chat;
    LlmEndpointConfig llm_embed;
    std::size_t dataset_size = 10;  // synthetic dataset size
    std::string initial_payload;    // empty => synthetic seed from env.initial_mean

    void validate() const {
        search.validate();
        env.validate();
        if (dataset_size == 0) throw ConfigError("dataset_size must be positive");
    }
};

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& known,
                                const std::string& section) {
    std::string unknown;
    for (const auto& [key, value] : j.items())
        if (known.count(key) == 0) unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty())
        throw ConfigError("unknown config key(s) in " + section + ": " + unknown);
}

inline void parse_priority_section(const Json& j, PriorityConfig& out) {
    reject_unknown_keys(j, {"kind", "sigma", "beta", "horizon"}, "priority");
    if (j.contains("kind")) out.kind = priority_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("sigma")) out.sigma = j.at("sigma").get<double>();
    if (j.contains("beta")) out.beta = j.at("beta").get<double>();
    if (j.contains("horizon") && !j.at("horizon").is_null())
        out.horizon = j.at("horizon").get<std::uint64_t>();
}

inline void parse_env_section(const Json& j, SyntheticEnvConfig& out) {
    reject_unknown_keys(j,
                        {"reward_cap", "gamma", "delta0", "sigma", "noise", "failure_mode",
                         "embedding_dim", "initial_mean"},
                        "env");
    if (j.contains("reward_cap")) out.reward_cap = j.at("reward_cap").get<double>();
    if (j.contains("gamma")) out.gamma = j.at("gamma").get<double>();
    if (j.contains("delta0")) out.delta0 = j.at("delta0").get<double>();
    if (j.contains("sigma")) out.sigma = j.at("sigma").get<double>();
    if (j.contains("noise")) out.noise = noise_kind_from_string(j.at("noise").get<std::string>());
    if (j.contains("failure_mode"))
        out.failure_mode = failure_mode_from_string(j.at("failure_mode").get<std::string>());
    if (j.contains("embedding_dim")) out.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    if (j.contains("initial_mean")) out.initial_mean = j.at("initial_mean").get<double>();
}

inline void parse_llm_section(const Json& j, LlmEndpointConfig& out) {
    reject_unknown_keys(j,
                        {"base_url", "model", "api_key_env", "timeout_ms", "max_retries",
                         "temperature", "backoff_initial_ms"},
                        "llm");
    if (j.contains("base_url")) out.base_url = j.at("base_url").get<std::string>();
    if (j.contains("model")) out.model = j.at("model").get<std::string>();
    if (j.contains("api_key_env")) out.api_key_env = j.at("api_key_env").get<std::string>();
    if (j.contains("timeout_ms")) out.timeout_ms = j.at("timeout_ms").get<int>();
    if (j.contains("max_retries")) out.max_retries = j.at("max_retries").get<int>();
    if (j.contains("temperature")) out.temperature = j.at("temperature").get<double>();
    if (j.contains("backoff_initial_ms"))
        out.backoff_initial_ms = j.at("backoff_initial_ms").get<int>();
}

}  // namespace detail

// String-valued CLI overrides, applied after the file (overrides win).
using CliOverrides = std::map<std::string, std::string>;

inline RunConfig parse_run_config(const Json& j) {
    RunConfig cfg;
    detail::reject_unknown_keys(
        j,
        {"seed", "batch_size", "num_batches", "num_candidates", "epsilon", "budget_metric_calls",
         "max_parallel", "summarizer_threshold", "failure_reward", "priority", "oracle", "env",
         "llm_chat", "llm_embed", "dataset_size", "initial_payload"},
        "config");
    if (j.contains("seed")) cfg.search.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("batch_size")) cfg.search.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("num_batches")) cfg.search.num_batches = j.at("num_batches").get<std::size_t>();
    if (j.contains("num_candidates"))
        cfg.search.num_candidates = j.at("num_candidates").get<std::size_t>();
    if (j.contains("epsilon")) cfg.search.epsilon = j.at("epsilon").get<double>();
    if (j.contains("budget_metric_calls"))
        cfg.search.budget_metric_calls = j.at("budget_metric_calls").get<std::uint64_t>();
    if (j.contains("max_parallel")) cfg.search.max_parallel = j.at("max_parallel").get<std::size_t>();
    if (j.contains("summarizer_threshold"))
        cfg.search.summarizer_threshold = j.at("summarizer_threshold").get<double>();
    if (j.contains("failure_reward"))
        cfg.search.failure_reward = j.at("failure_reward").get<double>();
    if (j.contains("priority")) detail::parse_priority_section(j.at("priority"), cfg.search.priority);
    if (j.contains("oracle")) cfg.oracle = oracle_kind_from_string(j.at("oracle").get<std::string>());
    if (j.contains("env")) detail::parse_env_section(j.at("env"), cfg.env);
    if (j.contains("llm_chat")) detail::parse_llm_section(j.at("llm_chat"), cfg.llm_chat);
    if (j.contains("llm_embed")) detail::parse_llm_section(j.at("llm_embed"), cfg.llm_embed);
    if (j.contains("dataset_size")) cfg.dataset_size = j.at("dataset_size").get<std::size_t>();
    if (j.contains("initial_payload"))
        cfg.initial_payload = j.at("initial_payload").get<std::string>();
    return cfg;
}

inline Json run_config_to_json(const RunConfig& cfg) {
    Json priority{{"kind", to_string(cfg.search.priority.kind)},
                  {"sigma", cfg.search.priority.sigma},
                  {"beta", cfg.search.priority.beta}};
    priority["horizon"] =
        cfg.search.priority.horizon ? Json(*cfg.search.priority.horizon) : Json(nullptr);
    return Json{
        {"seed", cfg.search.seed},
        {"batch_size", cfg.search.batch_size},
        {"num_batches", cfg.search.num_batches},
        {"num_candidates", cfg.search.num_candidates},
        {"epsilon", cfg.search.epsilon},
        {"budget_metric_calls", cfg.search.budget_metric_calls},
        {"max_parallel", cfg.search.max_parallel},
        {"summarizer_threshold", cfg.search.summarizer_threshold},
        {"failure_reward", cfg.search.failure_reward},
        {"priority", std::move(priority)},
        {"oracle", cfg.oracle == OracleKind::synthetic ? "synthetic" : "llm"},
        {"env",
         Json{{"reward_cap", cfg.env.reward_cap},
              {"gamma", cfg.env.gamma},
              {"delta0", cfg.env.delta0},
              {"sigma", cfg.env.sigma},
              {"noise", cfg.env.noise == NoiseKind::none
                            ? "none"
                            : (cfg.env.noise == NoiseKind::gaussian ? "gaussian" : "bernoulli")},
              {"failure_mode",
               cfg.env.failure_mode == FailureMode::stay ? "stay" : "regress_uniform"},
              {"embedding_dim", cfg.env.embedding_dim},
              {"initial_mean", cfg.env.initial_mean}}},
        {"dataset_size", cfg.dataset_size},
    };
}

// Loads the JSON config file (all keys optional; reference defaults
// otherwise) and applies CLI overrides on top. Unknown keys anywhere are an
// error.
inline RunConfig load_config(const std::optional<std::string>& path,
                             const CliOverrides& overrides) {
    Json j = Json::object();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("config file '" + *path + "' does not exist or is unreadable");
        try {
            j = Json::parse(in);
        } catch (const Json::exception& e) {
            throw ConfigError("config file '" + *path + "' is not valid JSON: " + e.what());
        }
    }

    static const std::set<std::string> known_overrides = {
        "seed",       "budget_metric_calls", "epsilon",     "priority", "sigma",
        "beta",       "num_candidates",      "batch_size",  "num_batches",
        "max_parallel", "oracle",            "summarizer_threshold"};
    for (const auto& [key, value] : overrides) {
        if (known_overrides.count(key) == 0)
            throw ConfigError("unknown override key '" + key + "'");
        if (key == "priority") {
            j["priority"]["kind"] = value;
        } else if (key == "sigma") {
            j["priority"]["sigma"] = std::stod(value);
        } else if (key == "beta") {
            j["priority"]["beta"] = std::stod(value);
        } else if (key == "epsilon" || key == "summarizer_threshold") {
            j[key] = std::stod(value);
        } else if (key == "oracle") {
            j[key] = value;
        } else {
            j[key] = std::stoull(value);
        }
    }

    RunConfig cfg = parse_run_config(j);
    cfg.validate();
    return cfg;
}

// The synthetic dataset: placeholder tasks the synthetic guide ignores.
inline Dataset make_synthetic_dataset(std::size_t size) {
    Dataset dataset;
    dataset.reserve(size);
    for (std::size_t i = 0; i < size; ++i)
        dataset.push_back(Task{"task-" + std::to_string(i), "synthetic input " + std::to_string(i),
                               ""});
    return dataset;
}

inline Dataset load_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("dataset file '" + path + "' does not exist or is unreadable");
    Json j = Json::parse(in);
    Dataset dataset;
    for (const auto& jt : j) {
        Task t;
        t.id = jt.at("id").get<std::string>();
        t.input = jt.at("input").get<std::string>();
        t.side_info = jt.value("side_info", "");
        dataset.push_back(std::move(t));
    }
    if (dataset.empty()) throw ConfigError("dataset file '" + path + "' contains no tasks");
    return dataset;
}

}  // namespace polca
