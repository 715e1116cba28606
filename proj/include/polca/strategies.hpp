#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "polca/core.hpp"
#include "polca/error.hpp"

namespace polca {

enum class PriorityKind { mean, ucb_theory, ucb_beta, lifo, beam };

inline const char* to_string(PriorityKind k) {
    switch (k) {
        case PriorityKind::mean: return "mean";
        case PriorityKind::ucb_theory: return "ucb_theory";
        case PriorityKind::ucb_beta: return "ucb_beta";
        case PriorityKind::lifo: return "lifo";
        case PriorityKind::beam: return "beam";
    }
    return "?";
}

inline PriorityKind priority_kind_from_string(const std::string& s) {
    if (s == "mean") return PriorityKind::mean;
    if (s == "ucb_theory") return PriorityKind::ucb_theory;
    if (s == "ucb_beta") return PriorityKind::ucb_beta;
    if (s == "lifo") return PriorityKind::lifo;
    if (s == "beam") return PriorityKind::beam;
    throw ConfigError("unknown priority kind '" + s + "'");
}

struct PriorityConfig {
    PriorityKind kind = PriorityKind::mean;
    double sigma = 0.0;  // sub-Gaussian scale, ucb_theory only
    double beta = 0.0;   // ucb_beta only
    std::optional<std::uint64_t> horizon;  // fixed n for ucb_theory; running total otherwise
    std::size_t k = 1;   // exploration width
};

namespace detail {

inline double ucb_bonus(double scale, std::uint64_t n, std::uint64_t t) {
    if (t == 0) return std::numeric_limits<double>::infinity();
    if (n < 1) return std::numeric_limits<double>::infinity();
    return scale * std::sqrt(std::log(static_cast<double>(n)) / static_cast<double>(t));
}

}  // namespace detail

// Exploration priority p_explore of one entry. Natural log throughout.
// Unsampled entries score +inf under mean/ucb so they are evaluated first.
// `iteration` is part of the contract (priorities are per-iteration values)
// though the current kinds derive generation state from the memory itself.
inline double priority(const MemoryEntry& entry, const Memory& memory,
                       const PriorityConfig& config, std::int64_t iteration) {
    (void)iteration;
    const double inf = std::numeric_limits<double>::infinity();
    switch (config.kind) {
        case PriorityKind::mean:
            return entry.sampled() ? entry.mean : inf;
        case PriorityKind::ucb_theory: {
            if (!entry.sampled()) return inf;
            std::uint64_t n = config.horizon ? *config.horizon : memory.total_samples();
            return entry.mean + detail::ucb_bonus(2.0 * config.sigma, n, entry.sample_count);
        }
        case PriorityKind::ucb_beta: {
            if (!entry.sampled()) return inf;
            return entry.mean +
                   detail::ucb_bonus(config.beta, memory.total_samples(), entry.sample_count);
        }
        case PriorityKind::lifo:
            return static_cast<double>(entry.candidate.created_at);
        case PriorityKind::beam: {
            // Only the latest generation survives: entries of the newest
            // created_at in memory score the mean of their creation-round
            // observations (their initial validation), everything older
            // scores -inf.
            std::int64_t newest = entry.candidate.created_at;
            for (const auto& e : memory.entries())
                newest = std::max(newest, e.candidate.created_at);
            if (entry.candidate.created_at != newest) return -inf;
            if (entry.observations.empty()) return inf;  // not yet validated
            const std::int64_t validation_round = entry.observations.front().iteration;
            double sum = 0.0;
            std::uint64_t count = 0;
            for (const auto& obs : entry.observations)
                if (obs.iteration == validation_round) {
                    sum += obs.reward;
                    ++count;
                }
            return sum / static_cast<double>(count);
        }
    }
    throw Error("priority: unreachable kind");
}

// Top-k entries by priority, descending. Ties: fewer samples first, then
// earlier created_at, then insertion order. lifo forces k = 1 (sequential
// refinement explores a single path).
inline std::vector<Candidate> select_programs(const Memory& memory, const PriorityConfig& config,
                                              std::int64_t iteration) {
    if (memory.empty()) throw Error("select_programs: memory is empty");
    struct Ranked {
        double prio;
        const MemoryEntry* entry;
    };
    std::vector<Ranked> ranked;
    ranked.reserve(memory.size());
    for (const auto& e : memory.entries())
        ranked.push_back(Ranked{priority(e, memory, config, iteration), &e});
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.prio != b.prio) return a.prio > b.prio;
        if (a.entry->sample_count != b.entry->sample_count)
            return a.entry->sample_count < b.entry->sample_count;
        if (a.entry->candidate.created_at != b.entry->candidate.created_at)
            return a.entry->candidate.created_at < b.entry->candidate.created_at;
        return a.entry->insertion_index < b.entry->insertion_index;
    });
    // Entries at -inf are pruned branches (beam discards old generations);
    // they stay in memory but are never explored.
    const double neg_inf = -std::numeric_limits<double>::infinity();
    std::size_t live = ranked.size();
    while (live > 1 && ranked[live - 1].prio == neg_inf) --live;
    std::size_t k = config.kind == PriorityKind::lifo ? 1 : std::max<std::size_t>(config.k, 1);
    k = std::min(k, live);
    std::vector<Candidate> selected;
    selected.reserve(k);
    for (std::size_t i = 0; i < k; ++i) selected.push_back(ranked[i].entry->candidate);
    return selected;
}

}  // namespace polca
