#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "polca/core.hpp"
#include "polca/error.hpp"
#include "polca/rng.hpp"

namespace polca {

struct GuideResult {
    std::string output;
    double reward = 0.0;
    std::string feedback;
};

// Local proposal context C_theta: the seed candidate, its rollouts from the
// current iteration, and the global history summary.
struct ProposalContext {
    Candidate seed;
    std::vector<Observation> rollouts;
    std::string history_context;
};

struct SummarizerPrompt {
    std::string system;
    std::string user;
};

// Oracle interfaces. Implementations must either tolerate concurrent calls
// or return true from serial_only(); the engine honors the flag.
class Guide {
public:
    virtual ~Guide() = default;
    virtual GuideResult score(const Candidate& candidate, const Task& task, RngEngine& rng) = 0;
    virtual bool serial_only() const { return false; }
};

class Optimizer {
public:
    virtual ~Optimizer() = default;
    // Returns the proposed parameter payload; the engine wraps it into a
    // Candidate with a fresh id, parent link and embedding.
    virtual std::string propose(const ProposalContext& context, RngEngine& rng) = 0;
    virtual bool serial_only() const { return false; }
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual Embedding embed(const std::string& payload) = 0;
    virtual std::size_t dimension() const = 0;
};

class Summarizer {
public:
    virtual ~Summarizer() = default;
    virtual std::string summarize(const SummarizerPrompt& prompt) = 0;
};

// Returns the rendered prompt unchanged; used when no external summarizer
// model is wired in.
class IdentitySummarizer final : public Summarizer {
public:
    std::string summarize(const SummarizerPrompt& prompt) override {
        return prompt.system + "\n\n" + prompt.user;
    }
};

// ---------------------------------------------------------------------------
// Synthetic environment: candidates carry a hidden true mean mu in their
// payload, the guide samples rewards around it, and the optimizer implements
// the strict-improvement oracle (success probability delta0, jump > gamma).
// ---------------------------------------------------------------------------

enum class NoiseKind { none, gaussian, bernoulli };
enum class FailureMode { stay, regress_uniform };

inline NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "none") return NoiseKind::none;
    if (s == "gaussian") return NoiseKind::gaussian;
    if (s == "bernoulli") return NoiseKind::bernoulli;
    throw ConfigError("unknown noise kind '" + s + "'");
}

inline FailureMode failure_mode_from_string(const std::string& s) {
    if (s == "stay") return FailureMode::stay;
    if (s == "regress_uniform") return FailureMode::regress_uniform;
    throw ConfigError("unknown failure mode '" + s + "'");
}

struct SyntheticEnvConfig {
    double reward_cap = 1.0;   // B
    double gamma = 0.1;        // minimum improvement on success
    double delta0 = 1.0;       // success probability, in (0, 1]
    double sigma = 0.0;        // reward noise scale
    NoiseKind noise = NoiseKind::none;
    FailureMode failure_mode = FailureMode::stay;
    std::size_t embedding_dim = 8;
    double initial_mean = 0.0;  // mu(theta_0)

    void validate() const {
        if (reward_cap <= 0.0) throw ConfigError("env.reward_cap must be positive");
        if (gamma <= 0.0 || gamma > reward_cap)
            throw ConfigError("env.gamma must be in (0, reward_cap]");
        if (delta0 <= 0.0 || delta0 > 1.0) throw ConfigError("env.delta0 must be in (0, 1]");
        if (sigma < 0.0) throw ConfigError("env.sigma must be non-negative");
        if (embedding_dim == 0) throw ConfigError("env.embedding_dim must be positive");
        if (initial_mean < 0.0 || initial_mean > reward_cap)
            throw ConfigError("env.initial_mean must be in [0, reward_cap]");
    }
};

// Synthetic payloads are "mu=<value>;tag=<hex>"; the tag keeps payloads of
// equal-mean proposals distinct so the hash embedding separates them.
inline std::string make_synthetic_payload(double true_mean, std::uint64_t tag) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "mu=%.17g;tag=%016llx", true_mean,
                  static_cast<unsigned long long>(tag));
    return buf;
}

inline std::optional<double> parse_synthetic_mean(const std::string& payload) {
    double mu = 0.0;
    if (std::sscanf(payload.c_str(), "mu=%lg;", &mu) == 1) return mu;
    return std::nullopt;
}

inline double require_synthetic_mean(const Candidate& c) {
    auto mu = parse_synthetic_mean(c.payload);
    if (!mu)
        throw Error("synthetic oracle: candidate '" + c.id + "' payload carries no true mean");
    return *mu;
}

// r = mu exactly (none), Normal(mu, sigma^2) unclamped (gaussian), or a
// {0,1} coin with mean mu (bernoulli, requires mu in [0,1]).
inline GuideResult guide_score(const SyntheticEnvConfig& env, const Candidate& candidate,
                               const Task& task, RngEngine& rng) {
    const double mu = require_synthetic_mean(candidate);
    double r = mu;
    switch (env.noise) {
        case NoiseKind::none: break;
        case NoiseKind::gaussian: r = normal(rng, mu, env.sigma); break;
        case NoiseKind::bernoulli:
            if (mu < 0.0 || mu > 1.0)
                throw ConfigError("guide_score: bernoulli noise requires mu in [0,1], got " +
                                  std::to_string(mu));
            r = bernoulli(rng, mu) ? 1.0 : 0.0;
            break;
    }
    GuideResult res;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "task %s: reward %.6f", task.id.c_str(), r);
    res.feedback = buf;
    res.output = "synthetic output for " + task.id;
    res.reward = r;
    return res;
}

// Strict-improvement proposal: for mu <= B - gamma, succeed with probability
// delta0 and draw mu' uniformly from (mu+gamma, min(mu+2*gamma, B)];
// otherwise apply the failure mode. Seeds already above B - gamma stay put
// (no improvement guarantee there). Returns the new true mean.
inline double synthetic_propose_mean(const SyntheticEnvConfig& env, double mu, RngEngine& rng) {
    const double cap = env.reward_cap;
    if (mu > cap - env.gamma) return mu;
    if (bernoulli(rng, env.delta0))
        return uniform_open_lo(rng, mu + env.gamma, std::min(mu + 2.0 * env.gamma, cap));
    switch (env.failure_mode) {
        case FailureMode::stay: return mu;
        case FailureMode::regress_uniform: return uniform_range(rng, 0.0, mu);
    }
    return mu;
}

// Deterministic hash embedding into [0,1]^d: identical payloads map to
// identical points; the i-th coordinate hashes payload plus the axis index.
inline Embedding synthetic_embed(const std::string& payload, std::size_t dimension) {
    Embedding v(dimension);
    const std::uint64_t base = detail::fnv1a64(payload);
    for (std::size_t i = 0; i < dimension; ++i) {
        std::uint64_t state = base ^ (0x9e3779b97f4a7c15ULL * (i + 1));
        std::uint64_t h = detail::splitmix64(state);
        v[i] = static_cast<double>(h >> 11) * 0x1.0p-53;
    }
    return v;
}

class SyntheticGuide final : public Guide {
public:
    explicit SyntheticGuide(SyntheticEnvConfig env) : env_(env) {}
    GuideResult score(const Candidate& candidate, const Task& task, RngEngine& rng) override {
        return guide_score(env_, candidate, task, rng);
    }

private:
    SyntheticEnvConfig env_;
};

class SyntheticOptimizer final : public Optimizer {
public:
    explicit SyntheticOptimizer(SyntheticEnvConfig env) : env_(env) {}
    std::string propose(const ProposalContext& context, RngEngine& rng) override {
        const double mu = require_synthetic_mean(context.seed);
        const double next = synthetic_propose_mean(env_, mu, rng);
        return make_synthetic_payload(next, rng());
    }

private:
    SyntheticEnvConfig env_;
};

class SyntheticEmbedder final : public Embedder {
public:
    explicit SyntheticEmbedder(std::size_t dimension) : dimension_(dimension) {}
    Embedding embed(const std::string& payload) override {
        return synthetic_embed(payload, dimension_);
    }
    std::size_t dimension() const override { return dimension_; }

private:
    std::size_t dimension_;
};

// Embeds a synthetic candidate by its true mean, all coordinates equal to
// scale * mu / B. Semantically similar candidates (close mu) land close
// together, so the epsilon-net genuinely caps the number of distinct
// admitted programs; used by the theory harness.
class MeanEmbedder final : public Embedder {
public:
    MeanEmbedder(const SyntheticEnvConfig& env, std::size_t dimension, double scale)
        : cap_(env.reward_cap), dimension_(dimension), scale_(scale) {}
    Embedding embed(const std::string& payload) override {
        auto mu = parse_synthetic_mean(payload);
        if (!mu) throw Error("MeanEmbedder: payload carries no true mean");
        return Embedding(dimension_, scale_ * *mu / cap_);
    }
    std::size_t dimension() const override { return dimension_; }
    double side_length() const { return scale_; }

private:
    double cap_;
    std::size_t dimension_;
    double scale_;
};

}  // namespace polca
