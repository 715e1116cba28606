// polca: stochastic generative-optimization search engine.
//
// Subcommands:
//   run           full search loop on a synthetic or LLM-backed problem
//   theory        Monte Carlo verification of the hitting-time/UCB analysis
//   filter-check  epsilon-net audit of a memory snapshot
//   replay        re-derive metrics and counters from a trace file

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polca/config.hpp"
#include "polca/core.hpp"
#include "polca/engine.hpp"
#include "polca/filter.hpp"
#include "polca/llm.hpp"
#include "polca/oracles.hpp"
#include "polca/theory.hpp"
#include "polca/trace.hpp"

namespace {

namespace fs = std::filesystem;
using polca::Json;

std::vector<std::uint64_t> parse_u64_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) if (!item.empty()) out.push_back(std::stoull(item));
    return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) if (!item.empty()) out.push_back(std::stod(item));
    return out;
}

struct RunFlags {
    std::optional<std::string> config_path;
    std::optional<std::string> dataset_path;
    std::string output_dir = "polca-out";
    polca::CliOverrides overrides;
};

void add_override_flags(CLI::App* cmd, RunFlags& flags) {
    auto add = [&flags, cmd](const std::string& flag, const std::string& key,
                             const std::string& help) {
        cmd->add_option_function<std::string>(
            flag, [&flags, key](const std::string& v) { flags.overrides[key] = v; }, help);
    };
    add("--seed", "seed", "run seed");
    add("--budget-metric-calls", "budget_metric_calls", "total guide-call budget");
    add("--epsilon", "epsilon", "diversity threshold for the semantic filter");
    add("--priority", "priority", "priority kind: mean|ucb_theory|ucb_beta|lifo|beam");
    add("--sigma", "sigma", "UCB sub-Gaussian scale (ucb_theory)");
    add("--beta", "beta", "UCB exploration coefficient (ucb_beta)");
    add("--num-candidates", "num_candidates", "exploration width k");
    add("--batch-size", "batch_size", "minibatch size");
    add("--num-batches", "num_batches", "independent minibatches per iteration");
    add("--max-parallel", "max_parallel", "max in-flight oracle calls");
    add("--oracle", "oracle", "oracle backend: synthetic|llm");
}

int cmd_run(const RunFlags& flags) {
    polca::RunConfig cfg = polca::load_config(flags.config_path, flags.overrides);

    polca::Dataset dataset = flags.dataset_path ? polca::load_dataset_file(*flags.dataset_path)
                                                : polca::make_synthetic_dataset(cfg.dataset_size);

    std::unique_ptr<polca::Guide> guide;
    std::unique_ptr<polca::Optimizer> optimizer;
    std::unique_ptr<polca::Embedder> embedder;
    std::unique_ptr<polca::Summarizer> summarizer;

    polca::Candidate initial;
    if (cfg.oracle == polca::OracleKind::synthetic) {
        guide = std::make_unique<polca::SyntheticGuide>(cfg.env);
        optimizer = std::make_unique<polca::SyntheticOptimizer>(cfg.env);
        embedder = std::make_unique<polca::SyntheticEmbedder>(cfg.env.embedding_dim);
        summarizer = std::make_unique<polca::IdentitySummarizer>();
        initial.payload = cfg.initial_payload.empty()
                              ? polca::make_synthetic_payload(cfg.env.initial_mean, 0)
                              : cfg.initial_payload;
    } else {
        auto chat = std::make_shared<polca::LlmClient>(cfg.llm_chat);
        auto embed = std::make_shared<polca::LlmClient>(cfg.llm_embed);
        guide = std::make_unique<polca::LlmJudgeGuide>(chat);
        optimizer = std::make_unique<polca::LlmOptimizer>(chat);
        embedder = std::make_unique<polca::LlmEmbedder>(embed, 0);
        summarizer = std::make_unique<polca::LlmSummarizer>(chat);
        if (cfg.initial_payload.empty())
            throw polca::ConfigError("llm oracle requires initial_payload in the config");
        initial.payload = cfg.initial_payload;
    }

    polca::Engine engine(cfg.search, dataset, *guide, *optimizer, *embedder, *summarizer);
    auto result = engine.run(initial);

    fs::create_directories(flags.output_dir);

    Json header = result.trace.header();
    header["config"] = polca::run_config_to_json(cfg);
    header["created_unix_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::system_clock::now().time_since_epoch())
                                    .count();
    result.trace.set_header(header);

    const std::string trace_path = (fs::path(flags.output_dir) / "trace.jsonl").string();
    polca::emit_trace_file(result.trace, trace_path);

    {
        std::ofstream out(fs::path(flags.output_dir) / "metrics.csv");
        polca::write_metrics_csv(polca::metrics_curves(result.trace), out);
    }
    {
        std::ofstream out(fs::path(flags.output_dir) / "summary.json");
        out << Json{{"best_candidate_id", result.best.id},
                    {"best_payload", result.best.payload},
                    {"best_mean", result.memory.entry(result.best.id).mean},
                    {"counters", polca::counters_to_json(result.counters)},
                    {"memory_size", result.memory.size()}}
                   .dump(2)
            << "\n";
    }
    {
        std::ofstream out(fs::path(flags.output_dir) / "memory.json");
        out << result.memory.to_json(result.trace.header().value("run_id", "")).dump(2) << "\n";
    }

    std::cout << "best candidate: " << result.best.id << " (mean "
              << result.memory.entry(result.best.id).mean << ", " << result.memory.size()
              << " candidates in memory)\n"
              << "metric calls: " << result.counters.metric_calls
              << ", evaluation steps: " << result.counters.evaluation_steps
              << ", proposals: " << result.counters.proposals
              << ", proposal steps: " << result.counters.proposal_steps << "\n"
              << "outputs in " << flags.output_dir << "\n";
    return 0;
}

struct TheoryFlags {
    double delta0 = 0.5;
    double gamma = 0.2;
    double cap = 1.0;
    double sigma = 0.5;
    double epsilon = 0.1;
    std::uint64_t replicates = 10000;
    std::string n_grid = "1000,10000,100000";
    std::uint64_t seeds = 20;
    std::uint64_t seed = 1;
    std::string output_dir = "polca-out";
    bool skip_ucb = false;
};

int cmd_theory(const TheoryFlags& flags) {
    polca::SyntheticEnvConfig env;
    env.reward_cap = flags.cap;
    env.gamma = flags.gamma;
    env.delta0 = flags.delta0;
    env.validate();

    fs::create_directories(flags.output_dir);
    std::ofstream csv(fs::path(flags.output_dir) / "theory.csv");
    csv << "study,delta0,gamma,cap,sigma,epsilon,n,replicates,analytic,empirical,stderr,pass\n";

    const std::uint64_t levels =
        static_cast<std::uint64_t>(std::llround(flags.cap / flags.gamma));
    bool all_pass = true;
    auto report = [&](const std::string& study, double sigma, double epsilon, std::uint64_t n,
                      std::uint64_t replicates, double analytic, double empirical, double se,
                      bool pass) {
        all_pass = all_pass && pass;
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%g,%g,%g,%g,%g,%llu,%llu,%.6f,%.6f,%.6f,%s",
                      study.c_str(), flags.delta0, flags.gamma, flags.cap, sigma, epsilon,
                      static_cast<unsigned long long>(n),
                      static_cast<unsigned long long>(replicates), analytic, empirical, se,
                      pass ? "yes" : "no");
        csv << line << "\n";
        std::cout << (pass ? "[PASS] " : "[FAIL] ") << study << " n=" << n
                  << " analytic=" << analytic << " empirical=" << empirical << " (se=" << se
                  << ")\n";
    };

    {
        auto stat = polca::monte_carlo(flags.replicates, flags.seed, "theory-seq", [&](auto& rng) {
            return polca::hitting_time_sequential(env, rng);
        });
        const double analytic = polca::sequential_hitting_time_analytic(flags.delta0, levels);
        const bool pass = std::abs(stat.mean - analytic) <= 3.0 * stat.stderr_mean;
        report("hitting_time_sequential", 0.0, 0.0, levels, flags.replicates, analytic, stat.mean,
               stat.stderr_mean, pass);
    }
    {
        auto stat = polca::monte_carlo(flags.replicates, flags.seed, "theory-polca", [&](auto& rng) {
            return polca::hitting_time_polca(env, rng);
        });
        const double analytic = polca::polca_hitting_time_analytic(flags.delta0, levels);
        const bool pass = std::abs(stat.mean - analytic) <= 3.0 * stat.stderr_mean;
        report("hitting_time_polca", 0.0, 0.0, levels, flags.replicates, analytic, stat.mean,
               stat.stderr_mean, pass);
    }

    if (!flags.skip_ucb) {
        polca::SingleSelectConfig ss;
        ss.env = env;
        ss.env.sigma = flags.sigma;
        ss.env.noise = flags.sigma > 0 ? polca::NoiseKind::gaussian : polca::NoiseKind::none;
        ss.epsilon = flags.epsilon;
        const std::uint64_t n_eps = polca::packing_bound(flags.epsilon, 1, ss.embed_scale);

        std::vector<double> log_ns, mean_counts;
        for (std::uint64_t n : parse_u64_list(flags.n_grid)) {
            ss.horizon = n;
            double sum = 0.0, sumsq = 0.0;
            bool under_envelope = true;
            const double envelope = polca::suboptimal_selection_envelope(ss.env, n, n_eps, 16.0);
            for (std::uint64_t s = 0; s < flags.seeds; ++s) {
                polca::RngEngine rng(polca::derive_seed(flags.seed, "theory-ucb", n, s));
                auto trace = polca::run_single_select_ucb(ss, rng);
                const double count =
                    static_cast<double>(polca::suboptimal_selection_count(trace, ss.env));
                sum += count;
                sumsq += count * count;
                under_envelope = under_envelope && count <= envelope;
            }
            const double mean = sum / static_cast<double>(flags.seeds);
            const double var =
                std::max(0.0, sumsq / static_cast<double>(flags.seeds) - mean * mean);
            const double se = std::sqrt(var / static_cast<double>(flags.seeds));
            log_ns.push_back(std::log(static_cast<double>(n)));
            mean_counts.push_back(mean);
            report("ucb_suboptimal_count", ss.env.sigma, flags.epsilon, n, flags.seeds, envelope,
                   mean, se, under_envelope && mean <= envelope);
        }
        if (log_ns.size() >= 2) {
            auto fit = polca::least_squares(log_ns, mean_counts);
            const bool pass = fit.r_squared >= 0.9 && fit.slope > 0.0;
            all_pass = all_pass && pass;
            std::cout << (pass ? "[PASS] " : "[FAIL] ") << "ucb_log_shape slope=" << fit.slope
                      << " r2=" << fit.r_squared << "\n";
        }
    }

    std::cout << (all_pass ? "theory checks passed" : "theory checks FAILED") << "\n";
    return all_pass ? 0 : 1;
}

int cmd_filter_check(const std::string& snapshot_path, double epsilon) {
    std::ifstream in(snapshot_path);
    if (!in) {
        std::cerr << "cannot open snapshot '" << snapshot_path << "'\n";
        return 2;
    }
    polca::Memory memory = polca::Memory::from_json(Json::parse(in));
    const auto& entries = memory.entries();
    std::size_t violations = 0;
    double min_pair = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        for (std::size_t j = i + 1; j < entries.size(); ++j) {
            if (!entries[i].candidate.embedding || !entries[j].candidate.embedding) {
                std::cerr << "entry without embedding: "
                          << (entries[i].candidate.embedding ? entries[j].candidate.id
                                                             : entries[i].candidate.id)
                          << "\n";
                return 2;
            }
            const double d = polca::semantic_distance(*entries[i].candidate.embedding,
                                                      *entries[j].candidate.embedding);
            min_pair = std::min(min_pair, d);
            if (d < epsilon - 1e-12) {
                ++violations;
                std::cout << "violation: " << entries[i].candidate.id << " vs "
                          << entries[j].candidate.id << " distance " << d << " < " << epsilon
                          << "\n";
            }
        }
    }
    std::cout << "checked " << entries.size() << " candidates, min pairwise distance "
              << (entries.size() > 1 ? std::to_string(min_pair) : "n/a") << ", " << violations
              << " violation(s)\n";
    return violations == 0 ? 0 : 1;
}

int cmd_replay(const std::string& trace_path, const std::string& output_dir) {
    polca::TraceLog log = polca::parse_trace_file(trace_path);
    if (log.events().empty() || log.events().back().kind != polca::TraceKind::run_end) {
        std::cerr << "trace is truncated: no run_end event\n";
        return 1;
    }
    const polca::MetricCounters reconstructed = polca::reconstruct_counters(log);
    const polca::MetricCounters recorded =
        polca::counters_from_json(log.events().back().payload.at("counters"));
    if (!(reconstructed == recorded)) {
        std::cerr << "counter identity violated: trace-reconstructed counters differ from the "
                     "recorded run_end counters\n";
        return 1;
    }
    fs::create_directories(output_dir);
    std::ofstream out(fs::path(output_dir) / "metrics.csv");
    polca::write_metrics_csv(polca::metrics_curves(log), out);
    std::cout << "replayed " << log.size() << " events; counters consistent; metrics.csv written "
              << "to " << output_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"POLCA: prioritized stochastic generative optimization"};
    app.require_subcommand(1);

    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "run the search loop");
    run->add_option("--config", run_flags.config_path, "JSON config file");
    run->add_option("--dataset", run_flags.dataset_path, "JSON dataset file (array of tasks)");
    run->add_option("--output-dir", run_flags.output_dir, "output directory");
    add_override_flags(run, run_flags);

    TheoryFlags theory_flags;
    auto* theory = app.add_subcommand("theory", "Monte Carlo theory verification");
    theory->add_option("--delta0", theory_flags.delta0, "oracle success probability");
    theory->add_option("--gamma", theory_flags.gamma, "minimum improvement");
    theory->add_option("--cap", theory_flags.cap, "reward cap B");
    theory->add_option("--sigma", theory_flags.sigma, "reward noise for the UCB study");
    theory->add_option("--epsilon", theory_flags.epsilon, "filter threshold for the UCB study");
    theory->add_option("--replicates", theory_flags.replicates, "hitting-time replicates");
    theory->add_option("--n-grid", theory_flags.n_grid, "comma-separated UCB horizons");
    theory->add_option("--seeds", theory_flags.seeds, "UCB study seeds per horizon");
    theory->add_option("--seed", theory_flags.seed, "root seed");
    theory->add_option("--output-dir", theory_flags.output_dir, "output directory");
    theory->add_flag("--skip-ucb", theory_flags.skip_ucb, "hitting times only");

    std::string snapshot_path;
    double filter_epsilon = 0.1;
    auto* filter_check = app.add_subcommand("filter-check", "audit a memory snapshot");
    filter_check->add_option("--snapshot", snapshot_path, "memory.json path")->required();
    filter_check->add_option("--epsilon", filter_epsilon, "required pairwise separation");

    std::string trace_path, replay_out = "polca-out";
    auto* replay = app.add_subcommand("replay", "re-derive metrics from a trace");
    replay->add_option("--trace", trace_path, "trace.jsonl path")->required();
    replay->add_option("--output-dir", replay_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_flags);
        if (theory->parsed()) return cmd_theory(theory_flags);
        if (filter_check->parsed()) return cmd_filter_check(snapshot_path, filter_epsilon);
        if (replay->parsed()) return cmd_replay(trace_path, replay_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
