#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "polca/core.hpp"
#include "polca/error.hpp"
#include "polca/filter.hpp"
#include "polca/oracles.hpp"
#include "polca/rng.hpp"
#include "polca/strategies.hpp"

namespace polca {

inline constexpr std::uint64_t kHittingTimeStepCap = 10'000'000;

// Reward axis tiled by half-gamma intervals I_k = [(k-1)*gamma/2, k*gamma/2].
struct IntervalPartition {
    double gamma = 0.0;
    double cap = 0.0;  // B

    IntervalPartition(double gamma_, double cap_) : gamma(gamma_), cap(cap_) {
        if (gamma <= 0.0 || cap <= 0.0) throw ConfigError("interval partition: gamma, cap > 0");
        const double count = 2.0 * cap / gamma;
        if (std::abs(count - std::round(count)) > 1e-9)
            throw ConfigError("interval partition: cap must be divisible by gamma/2");
    }

    std::size_t interval_count() const {
        return static_cast<std::size_t>(std::llround(2.0 * cap / gamma));
    }
    // 1-based interval index of a reward value.
    std::size_t interval_of(double reward) const {
        double clamped = std::clamp(reward, 0.0, cap);
        auto k = static_cast<std::size_t>(std::ceil(clamped / (gamma / 2.0)));
        return std::max<std::size_t>(k, 1);
    }
};

struct TheoryQuantities {
    double u_interval = 0.0;  // 2 ln(n) / delta0
    double u_single = 0.0;    // 64 sigma^2 ln(n) / gamma^2
    std::uint64_t n_eps = 0;
};

inline TheoryQuantities theory_quantities(std::uint64_t n, double delta0, double sigma,
                                          double gamma, std::uint64_t n_eps) {
    TheoryQuantities q;
    const double log_n = std::log(static_cast<double>(n));
    q.u_interval = 2.0 * log_n / delta0;
    q.u_single = 64.0 * sigma * sigma * log_n / (gamma * gamma);
    q.n_eps = n_eps;
    return q;
}

// Analytic expectations from the deterministic-reward comparison of the two
// updating rules, with N = B / gamma improvement levels.
inline double sequential_hitting_time_analytic(double delta0, std::uint64_t levels) {
    return (std::pow(delta0, -static_cast<double>(levels)) - 1.0) / (1.0 - delta0);
}

inline double polca_hitting_time_analytic(double delta0, std::uint64_t levels) {
    return static_cast<double>(levels) / delta0;
}

namespace detail {

inline std::uint64_t improvement_levels(const SyntheticEnvConfig& env) {
    const double n = env.reward_cap / env.gamma;
    if (std::abs(n - std::round(n)) > 1e-9)
        throw ConfigError("hitting time: reward_cap must be divisible by gamma");
    return static_cast<std::uint64_t>(std::llround(n));
}

}  // namespace detail

// Worst-case sequential updating: each proposal improves one gamma-level
// with probability delta0; a failure regresses the iterate to the start, so
// reaching the near-optimal band takes N consecutive successes. Returns the
// number of proposal steps.
inline std::uint64_t hitting_time_sequential(const SyntheticEnvConfig& env, RngEngine& rng) {
    const std::uint64_t levels = detail::improvement_levels(env);
    std::uint64_t level = 0;
    for (std::uint64_t step = 1; step <= kHittingTimeStepCap; ++step) {
        if (bernoulli(rng, env.delta0))
            ++level;
        else
            level = 0;
        if (level >= levels) return step;
    }
    throw Error("hitting_time_sequential: step cap exceeded (non-convergence)");
}

// POLCA updating rule: proposals are seeded from the historical best, so a
// failure cannot reset progress regardless of failure_mode. Returns the
// number of proposal steps until the best exceeds B - gamma.
inline std::uint64_t hitting_time_polca(const SyntheticEnvConfig& env, RngEngine& rng) {
    const std::uint64_t levels = detail::improvement_levels(env);
    std::uint64_t best_level = 0;
    double best_mu = 0.0;
    for (std::uint64_t step = 1; step <= kHittingTimeStepCap; ++step) {
        if (bernoulli(rng, env.delta0)) {
            ++best_level;
        } else if (env.failure_mode == FailureMode::regress_uniform) {
            // The failed proposal lands below the baseline and is ignored by
            // the argmax; draw it anyway to model the oracle faithfully.
            (void)uniform_range(rng, 0.0, best_mu);
        }
        best_mu = static_cast<double>(best_level) * env.gamma;
        if (best_level >= levels) return step;
    }
    throw Error("hitting_time_polca: step cap exceeded (non-convergence)");
}

struct MonteCarloStat {
    double mean = 0.0;
    double stddev = 0.0;
    double stderr_mean = 0.0;
    std::uint64_t replicates = 0;
};

template <typename Fn>
MonteCarloStat monte_carlo(std::uint64_t replicates, std::uint64_t seed, std::string_view domain,
                           Fn&& sample) {
    if (replicates == 0) throw Error("monte_carlo: need at least one replicate");
    double sum = 0.0, sumsq = 0.0;
    for (std::uint64_t i = 0; i < replicates; ++i) {
        RngEngine rng(derive_seed(seed, domain, i));
        const double x = static_cast<double>(sample(rng));
        sum += x;
        sumsq += x * x;
    }
    MonteCarloStat s;
    s.replicates = replicates;
    s.mean = sum / static_cast<double>(replicates);
    const double var =
        std::max(0.0, sumsq / static_cast<double>(replicates) - s.mean * s.mean);
    s.stddev = std::sqrt(var);
    s.stderr_mean = s.stddev / std::sqrt(static_cast<double>(replicates));
    return s;
}

// ---------------------------------------------------------------------------
// Single-select, single-propose POLCA with the UCB priority of the theory
// section: per step, pick the program with the highest UCB score (fixed
// horizon n), observe one reward, propose one successor, filter it, and
// evaluate it once on acceptance.
// ---------------------------------------------------------------------------

struct SelectionRecord {
    std::string candidate_id;
    double true_mean = 0.0;
};

struct SingleSelectTrace {
    std::vector<SelectionRecord> selections;  // one per step, in step order
    std::size_t distinct_candidates = 0;      // accepted into memory overall
    double best_true_mean = 0.0;
};

struct SingleSelectConfig {
    SyntheticEnvConfig env;
    std::uint64_t horizon = 1000;  // n: number of selection steps and UCB horizon
    double epsilon = 0.1;
    double embed_scale = 4.0;  // mean-embedding hypercube side length
};

inline SingleSelectTrace run_single_select_ucb(const SingleSelectConfig& config, RngEngine& rng) {
    config.env.validate();
    MeanEmbedder embedder(config.env, 1, config.embed_scale);
    const FilterConfig filter_config{config.epsilon, embedder.dimension()};

    Memory memory;
    std::uint64_t next_id = 1;
    Candidate theta0;
    theta0.id = "theta-0";
    theta0.payload = make_synthetic_payload(config.env.initial_mean, 0);
    theta0.embedding = embedder.embed(theta0.payload);
    theta0.created_at = 0;
    memory.insert(theta0);

    PriorityConfig priority_config;
    priority_config.kind = PriorityKind::ucb_theory;
    priority_config.sigma = config.env.sigma;
    priority_config.horizon = config.horizon;
    priority_config.k = 1;

    const Task task{"t0", "synthetic", ""};
    SingleSelectTrace trace;
    trace.selections.reserve(config.horizon);

    auto observe = [&](const Candidate& c) {
        Observation obs;
        obs.candidate_id = c.id;
        obs.task_id = task.id;
        GuideResult g = guide_score(config.env, c, task, rng);
        obs.reward = g.reward;
        obs.output = g.output;
        obs.feedback = g.feedback;
        memory.update_stats({obs});
    };

    for (std::uint64_t step = 1; step <= config.horizon; ++step) {
        const Candidate selected =
            select_programs(memory, priority_config, static_cast<std::int64_t>(step)).front();
        const double selected_mu = require_synthetic_mean(selected);
        trace.selections.push_back(SelectionRecord{selected.id, selected_mu});
        observe(selected);

        const double proposed_mu = synthetic_propose_mean(config.env, selected_mu, rng);
        Candidate proposal;
        proposal.id = "theta-" + std::to_string(next_id);
        proposal.payload = make_synthetic_payload(proposed_mu, next_id);
        proposal.embedding = embedder.embed(proposal.payload);
        proposal.parent_id = selected.id;
        proposal.created_at = static_cast<std::int64_t>(step);
        FilterResult filtered = semantic_filter({proposal}, memory, filter_config);
        if (!filtered.accepted.empty()) {
            ++next_id;
            memory.insert(filtered.accepted.front());
            observe(filtered.accepted.front());
        }
    }

    trace.distinct_candidates = memory.size();
    for (const auto& e : memory.entries())
        trace.best_true_mean = std::max(trace.best_true_mean, require_synthetic_mean(e.candidate));
    return trace;
}

// Number of selection steps spent on candidates with mu <= B - gamma, read
// off the synthetic true-mean annotations.
inline std::uint64_t suboptimal_selection_count(const SingleSelectTrace& trace,
                                                const SyntheticEnvConfig& env) {
    std::uint64_t count = 0;
    for (const auto& rec : trace.selections)
        if (rec.true_mean <= env.reward_cap - env.gamma) ++count;
    return count;
}

// Selection-count envelope with an explicit absolute constant:
// c * (B / (2*gamma*delta0) + 64*sigma^2*N_eps / gamma^2) * ln(n).
inline double suboptimal_selection_envelope(const SyntheticEnvConfig& env, std::uint64_t n,
                                            std::uint64_t n_eps, double c) {
    const double log_n = std::log(static_cast<double>(n));
    const double term_oracle = env.reward_cap / (2.0 * env.gamma * env.delta0);
    const double term_noise =
        64.0 * env.sigma * env.sigma * static_cast<double>(n_eps) / (env.gamma * env.gamma);
    return c * (term_oracle + term_noise) * log_n;
}

// Least-squares fit of y against x; r_squared is 1 for a perfect line.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw Error("least_squares: need >= 2 points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw Error("least_squares: degenerate x values");
    LinearFit fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss_res = 0.0, ss_tot = 0.0;
    const double mean_y = sy / n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double pred = fit.intercept + fit.slope * x[i];
        ss_res += (y[i] - pred) * (y[i] - pred);
        ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
    }
    fit.r_squared = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
    return fit;
}

}  // namespace polca
