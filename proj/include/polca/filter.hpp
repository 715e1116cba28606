#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "polca/core.hpp"
#include "polca/error.hpp"

namespace polca {

struct FilterConfig {
    double epsilon = 0.0;  // diversity threshold, >= 0
    std::size_t dimension = 0;
};

// Trace record for one admission decision. min_distance is the distance to
// the nearest existing member at decision time (infinite against an empty
// reference set).
struct FilterDecision {
    std::string candidate_id;
    bool accepted = false;
    double min_distance = 0.0;
};

struct FilterResult {
    std::vector<Candidate> accepted;  // admission order
    std::vector<FilterDecision> decisions;
};

inline double semantic_distance(const Embedding& a, const Embedding& b) {
    if (a.size() != b.size())
        throw Error("semantic_distance: dimension mismatch (" + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()) + ")");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

namespace detail {

inline const Embedding& require_embedding(const Candidate& c, std::size_t dimension) {
    if (!c.embedding)
        throw Error("semantic_filter: candidate '" + c.id + "' has no embedding");
    if (c.embedding->size() != dimension)
        throw Error("semantic_filter: candidate '" + c.id + "' embedding dimension " +
                    std::to_string(c.embedding->size()) + " != configured " +
                    std::to_string(dimension));
    return *c.embedding;
}

}  // namespace detail

// Farthest-first traversal admission: repeatedly pick the raw candidate with
// the largest min-distance to memory plus already-accepted candidates; admit
// while that distance is >= epsilon, stop at the first rejection (everything
// left is at least as redundant). Ties go to raw-sequence order. Candidates
// remaining after termination are recorded as rejected with their current
// min-distance.
inline FilterResult semantic_filter(const std::vector<Candidate>& raw, const Memory& memory,
                                    const FilterConfig& config) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<const Embedding*> reference;
    reference.reserve(memory.size() + raw.size());
    for (const auto& e : memory.entries())
        reference.push_back(&detail::require_embedding(e.candidate, config.dimension));

    struct Pending {
        std::size_t raw_index;
        double min_dist;  // to current reference set
    };
    std::vector<Pending> pool;
    pool.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const Embedding& emb = detail::require_embedding(raw[i], config.dimension);
        double d = inf;
        for (const auto* ref : reference) d = std::min(d, semantic_distance(emb, *ref));
        pool.push_back(Pending{i, d});
    }

    FilterResult result;
    while (!pool.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pool.size(); ++i)
            if (pool[i].min_dist > pool[best].min_dist) best = i;
        const double delta_max = pool[best].min_dist;
        const std::size_t chosen = pool[best].raw_index;
        if (delta_max >= config.epsilon) {
            result.decisions.push_back(FilterDecision{raw[chosen].id, true, delta_max});
            result.accepted.push_back(raw[chosen]);
            reference.push_back(&*raw[chosen].embedding);
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
            const Embedding& admitted = *reference.back();
            for (auto& p : pool)
                p.min_dist = std::min(p.min_dist,
                                      semantic_distance(*raw[p.raw_index].embedding, admitted));
        } else {
            // All remaining candidates sit within epsilon of the net. The
            // examined maximizer is recorded first, the rest in raw order.
            result.decisions.push_back(FilterDecision{raw[chosen].id, false, delta_max});
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
            std::sort(pool.begin(), pool.end(),
                      [](const Pending& a, const Pending& b) { return a.raw_index < b.raw_index; });
            for (const auto& p : pool)
                result.decisions.push_back(FilterDecision{raw[p.raw_index].id, false, p.min_dist});
            pool.clear();
        }
    }
    return result;
}

// Upper bound N_eps on the number of points with pairwise distance > epsilon
// inside a d-dimensional hypercube of the given side length, via the standard
// packing argument: ceil(side * sqrt(d) / eps + 1)^d. Saturates at uint64 max.
inline std::uint64_t packing_bound(double epsilon, std::size_t dimension, double side_length) {
    if (epsilon <= 0.0) throw Error("packing_bound: epsilon must be positive");
    if (dimension == 0) throw Error("packing_bound: dimension must be positive");
    const std::uint64_t saturated = std::numeric_limits<std::uint64_t>::max();
    double per_axis = std::ceil(side_length * std::sqrt(static_cast<double>(dimension)) / epsilon + 1.0);
    if (per_axis >= 9.2e18) return saturated;
    const std::uint64_t m = static_cast<std::uint64_t>(per_axis);
    std::uint64_t bound = 1;
    for (std::size_t i = 0; i < dimension; ++i) {
        if (m != 0 && bound > saturated / m) return saturated;
        bound *= m;
    }
    return bound;
}

}  // namespace polca
