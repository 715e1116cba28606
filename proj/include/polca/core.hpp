#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "polca/error.hpp"

namespace polca {

using Json = nlohmann::json;
using Embedding = std::vector<double>;

// A program parameter theta: an opaque text payload plus an optional
// embedding. Ids are assigned by the engine and unique within a run.
struct Candidate {
    std::string id;
    std::string payload;
    std::optional<Embedding> embedding;
    std::optional<std::string> parent_id;
    std::int64_t created_at = 0;  // iteration index the candidate was proposed in
};

struct Task {
    std::string id;
    std::string input;
    std::string side_info;  // may be empty
};

using Dataset = std::vector<Task>;

// One rollout tuple: candidate executed on a task, scored by the guide.
struct Observation {
    std::string candidate_id;
    std::string task_id;
    std::string output;
    double reward = 0.0;
    std::string feedback;
    std::int64_t iteration = 0;
};

// Per-candidate statistics. `mean` is a running mean over the observation
// log; it is 0 and meaningless while sample_count == 0 (use sampled()).
struct MemoryEntry {
    Candidate candidate;
    std::uint64_t sample_count = 0;
    double mean = 0.0;
    std::uint64_t insertion_index = 0;
    std::vector<Observation> observations;

    bool sampled() const { return sample_count > 0; }
};

// The candidate memory Q: entries in insertion order plus an id index.
// Single-writer; all mutation goes through insert/update_stats.
class Memory {
public:
    bool contains(const std::string& id) const { return index_.count(id) > 0; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::uint64_t total_samples() const { return total_samples_; }

    const std::vector<MemoryEntry>& entries() const { return entries_; }

    const MemoryEntry& entry(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw Error("memory: unknown candidate id '" + id + "'");
        return entries_[it->second];
    }

    void insert(Candidate candidate) {
        if (contains(candidate.id))
            throw Error("memory_insert: duplicate candidate id '" + candidate.id + "'");
        MemoryEntry e;
        e.candidate = std::move(candidate);
        e.insertion_index = entries_.size();
        index_.emplace(e.candidate.id, entries_.size());
        entries_.push_back(std::move(e));
    }

    // Appends each observation to its entry's log and refreshes the running
    // mean. Rejects the whole batch if any observation names an unknown id.
    void update_stats(const std::vector<Observation>& observations) {
        for (const auto& obs : observations) {
            if (!contains(obs.candidate_id))
                throw Error("update_stats: observation for unknown candidate id '" +
                            obs.candidate_id + "'");
            if (!std::isfinite(obs.reward))
                throw Error("update_stats: non-finite reward for candidate '" +
                            obs.candidate_id + "'");
        }
        for (const auto& obs : observations) {
            MemoryEntry& e = entries_[index_.at(obs.candidate_id)];
            e.observations.push_back(obs);
            e.sample_count += 1;
            e.mean += (obs.reward - e.mean) / static_cast<double>(e.sample_count);
            total_samples_ += 1;
        }
    }

    // Highest empirical mean among sampled entries. Ties: larger sample
    // count, then earlier created_at, then insertion order.
    const Candidate& best_candidate() const {
        const MemoryEntry* best = nullptr;
        for (const auto& e : entries_) {
            if (!e.sampled()) continue;
            if (best == nullptr || better_best(e, *best)) best = &e;
        }
        if (best == nullptr) throw Error("best_candidate: no sampled entries in memory");
        return best->candidate;
    }

    Json to_json(const std::string& run_id = "") const;
    static Memory from_json(const Json& j);

private:
    static bool better_best(const MemoryEntry& a, const MemoryEntry& b) {
        if (a.mean != b.mean) return a.mean > b.mean;
        if (a.sample_count != b.sample_count) return a.sample_count > b.sample_count;
        if (a.candidate.created_at != b.candidate.created_at)
            return a.candidate.created_at < b.candidate.created_at;
        return a.insertion_index < b.insertion_index;
    }

    std::vector<MemoryEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::uint64_t total_samples_ = 0;
};

inline Json observation_to_json(const Observation& o) {
    return Json{{"candidate_id", o.candidate_id}, {"task_id", o.task_id},
                {"output", o.output},             {"reward", o.reward},
                {"feedback", o.feedback},         {"iteration", o.iteration}};
}

inline Observation observation_from_json(const Json& j) {
    Observation o;
    o.candidate_id = j.at("candidate_id").get<std::string>();
    o.task_id = j.at("task_id").get<std::string>();
    o.output = j.at("output").get<std::string>();
    o.reward = j.at("reward").get<double>();
    o.feedback = j.at("feedback").get<std::string>();
    o.iteration = j.at("iteration").get<std::int64_t>();
    return o;
}

inline Json candidate_to_json(const Candidate& c) {
    Json j{{"id", c.id}, {"payload", c.payload}, {"created_at", c.created_at}};
    j["embedding"] = c.embedding ? Json(*c.embedding) : Json(nullptr);
    j["parent_id"] = c.parent_id ? Json(*c.parent_id) : Json(nullptr);
    return j;
}

inline Candidate candidate_from_json(const Json& j) {
    Candidate c;
    c.id = j.at("id").get<std::string>();
    c.payload = j.at("payload").get<std::string>();
    c.created_at = j.at("created_at").get<std::int64_t>();
    if (!j.at("embedding").is_null()) c.embedding = j.at("embedding").get<Embedding>();
    if (!j.at("parent_id").is_null()) c.parent_id = j.at("parent_id").get<std::string>();
    return c;
}

inline Json Memory::to_json(const std::string& run_id) const {
    Json entries = Json::array();
    for (const auto& e : entries_) {
        Json obs = Json::array();
        for (const auto& o : e.observations) obs.push_back(observation_to_json(o));
        entries.push_back(Json{{"candidate", candidate_to_json(e.candidate)},
                               {"sample_count", e.sample_count},
                               {"mean", e.mean},
                               {"insertion_index", e.insertion_index},
                               {"observations", std::move(obs)}});
    }
    return Json{{"run_id", run_id},
                {"total_samples", total_samples_},
                {"entries", std::move(entries)}};
}

inline Memory Memory::from_json(const Json& j) {
    Memory m;
    for (const auto& je : j.at("entries")) {
        m.insert(candidate_from_json(je.at("candidate")));
        std::vector<Observation> obs;
        for (const auto& jo : je.at("observations")) obs.push_back(observation_from_json(jo));
        m.update_stats(obs);
    }
    return m;
}

}  // namespace polca
