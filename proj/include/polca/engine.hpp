#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "polca/core.hpp"
#include "polca/error.hpp"
#include "polca/filter.hpp"
#include "polca/oracles.hpp"
#include "polca/rng.hpp"
#include "polca/strategies.hpp"
#include "polca/trace.hpp"

namespace polca {

struct SearchConfig {
    std::size_t batch_size = 2;       // minibatch size B
    std::size_t num_batches = 1;      // independent minibatches per iteration
    std::size_t num_candidates = 5;   // exploration width k
    double epsilon = 0.1;             // diversity threshold
    PriorityConfig priority;
    std::uint64_t budget_metric_calls = 100;
    std::size_t max_parallel = 10;
    std::uint64_t seed = 0;
    double summarizer_threshold = 0.5;  // success/failure split tau
    double failure_reward = 0.0;        // reward recorded when the guide errors

    void validate() const {
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (num_batches == 0) throw ConfigError("num_batches must be positive");
        if (num_candidates == 0) throw ConfigError("num_candidates must be positive");
        if (epsilon < 0.0) throw ConfigError("epsilon must be non-negative");
        if (budget_metric_calls == 0) throw ConfigError("budget_metric_calls must be positive");
        if (max_parallel == 0) throw ConfigError("max_parallel must be positive");
        if (!std::isfinite(summarizer_threshold))
            throw ConfigError("summarizer_threshold must be finite");
        if (priority.sigma < 0.0) throw ConfigError("priority.sigma must be non-negative");
        if (priority.beta < 0.0) throw ConfigError("priority.beta must be non-negative");
    }
};

namespace detail {

// Runs fn(i) for i in [0, n) on up to max_parallel threads and returns an
// exception_ptr per item. Serial when max_parallel == 1 (fixed dispatch
// order); results land in caller-provided slots keyed by index, so thread
// interleaving never changes observable output.
inline std::vector<std::exception_ptr> parallel_for(std::size_t n, std::size_t max_parallel,
                                                    const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    if (n == 0) return errors;
    const std::size_t workers = std::min(max_parallel, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
        return errors;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    return errors;
}

inline std::string exception_text(const std::exception_ptr& ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const std::exception& e) {
        return e.what();
    } catch (...) {
        return "unknown error";
    }
}

}  // namespace detail

// batch_size tasks drawn uniformly with replacement, in draw order.
inline std::vector<Task> sample_minibatch(const Dataset& dataset, std::size_t batch_size,
                                          RngEngine& rng) {
    if (dataset.empty()) throw Error("sample_minibatch: dataset is empty");
    if (batch_size == 0) throw Error("sample_minibatch: batch_size must be positive");
    std::vector<Task> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i)
        batch.push_back(dataset[uniform_index(rng, dataset.size())]);
    return batch;
}

// Contrastive history digest: per entry, up to one success (r > tau) and one
// failure (r <= tau) sampled from its log, rendered into the summarizer
// prompt template.
inline SummarizerPrompt render_summarizer_prompt(const Memory& memory, double threshold,
                                                 RngEngine& rng) {
    if (memory.empty()) throw Error("summarize: memory is empty");
    std::string trajectories;
    for (const auto& entry : memory.entries()) {
        std::vector<const Observation*> successes, failures;
        for (const auto& obs : entry.observations)
            (obs.reward > threshold ? successes : failures).push_back(&obs);
        trajectories += "Program " + entry.candidate.id + " (" +
                        (entry.sampled() ? "mean " + std::to_string(entry.mean) : "unsampled") +
                        ", " + std::to_string(entry.sample_count) + " rollouts):\n";
        trajectories += "  parameter: " + entry.candidate.payload + "\n";
        auto render_one = [&](const char* label, const std::vector<const Observation*>& side) {
            if (side.empty()) return;
            const Observation& obs = *side[uniform_index(rng, side.size())];
            char reward[32];
            std::snprintf(reward, sizeof(reward), "%.6f", obs.reward);
            trajectories += std::string("  [") + label + "] task=" + obs.task_id +
                            " reward=" + reward + " output=" + obs.output +
                            " feedback=" + obs.feedback + "\n";
        };
        render_one("success", successes);
        render_one("failure", failures);
    }
    SummarizerPrompt prompt;
    prompt.system =
        "You are an expert at analyzing program behavior patterns and providing actionable "
        "guidance for parameter optimization.";
    prompt.user =
        "Analyze the following program rollout trajectories and extract insights for "
        "optimization. For each program, a successful and a failed trajectory are provided for "
        "contrastive analysis.\n\nTrajectories:\n" +
        trajectories +
        "\nProvide your analysis in XML format:\n"
        "<reasoning> Analyze the key patterns and strategies that led to success or failure in "
        "these trajectories. </reasoning>\n"
        "<summary> Concrete recommendations for improving output quality based on successful or "
        "failed patterns observed. </summary>";
    return prompt;
}

// POLCA engine: owns the memory, counters and trace for one run.
class Engine {
public:
    struct RunResult {
        Candidate best;
        Memory memory;
        MetricCounters counters;
        TraceLog trace;
    };

    Engine(SearchConfig config, Dataset dataset, Guide& guide, Optimizer& optimizer,
           Embedder& embedder, Summarizer& summarizer)
        : config_(std::move(config)),
          dataset_(std::move(dataset)),
          guide_(guide),
          optimizer_(optimizer),
          embedder_(embedder),
          summarizer_(summarizer) {
        config_.priority.k = config_.num_candidates;
        serial_ = config_.max_parallel == 1 || guide_.serial_only() || optimizer_.serial_only();
    }

    // Evaluates every (candidate, task) pair under the concurrency contract.
    // A guide failure on one pair yields an error observation with the
    // configured failure reward; a fully failed batch aborts the run.
    std::vector<Observation> evaluate(const std::vector<Candidate>& candidates,
                                      const std::vector<Task>& batch, std::int64_t iteration) {
        if (candidates.empty()) throw Error("evaluate: no candidates");
        if (batch.empty()) throw Error("evaluate: empty batch");
        struct Job {
            const Candidate* candidate;
            const Task* task;
            std::size_t batch_pos;
        };
        std::vector<Job> jobs;
        jobs.reserve(candidates.size() * batch.size());
        for (const auto& c : candidates)
            for (std::size_t b = 0; b < batch.size(); ++b)
                jobs.push_back(Job{&c, &batch[b], b});

        std::vector<Observation> results(jobs.size());
        auto errors = detail::parallel_for(
            jobs.size(), serial_ ? 1 : config_.max_parallel, [&](std::size_t i) {
                const Job& job = jobs[i];
                RngEngine rng(derive_seed(config_.seed, "guide", static_cast<std::uint64_t>(iteration),
                                          detail::fnv1a64(job.candidate->id), job.batch_pos));
                GuideResult g = guide_.score(*job.candidate, *job.task, rng);
                results[i] = Observation{job.candidate->id, job.task->id, g.output,
                                         g.reward,          g.feedback,   iteration};
            });
        std::size_t failed = 0;
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (!errors[i]) continue;
            ++failed;
            results[i] = Observation{jobs[i].candidate->id,
                                     jobs[i].task->id,
                                     "",
                                     config_.failure_reward,
                                     "guide error: " + detail::exception_text(errors[i]),
                                     iteration};
        }
        if (failed == jobs.size()) throw Error("evaluate: every guide call in the batch failed");

        std::vector<std::size_t> order(jobs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (jobs[a].candidate->id != jobs[b].candidate->id)
                return jobs[a].candidate->id < jobs[b].candidate->id;
            if (jobs[a].task->id != jobs[b].task->id) return jobs[a].task->id < jobs[b].task->id;
            return jobs[a].batch_pos < jobs[b].batch_pos;
        });
        std::vector<Observation> canonical;
        canonical.reserve(results.size());
        for (std::size_t i : order) canonical.push_back(std::move(results[i]));

        counters_.metric_calls += jobs.size();
        counters_.evaluation_steps += 1;
        return canonical;
    }

    // One optimizer call per explored candidate; failures drop that context
    // and the rest proceed. Returned candidates carry fresh ids, parent
    // links and embeddings.
    std::vector<Candidate> propose_programs(
        const std::vector<std::pair<Candidate, std::vector<Observation>>>& explored,
        const std::string& history_context, std::int64_t iteration) {
        if (explored.empty()) throw Error("propose_programs: no explored candidates");
        for (const auto& [candidate, rollouts] : explored)
            if (rollouts.empty())
                throw Error("propose_programs: candidate '" + candidate.id +
                            "' has no current-iteration observations");

        std::vector<std::optional<std::string>> payloads(explored.size());
        auto errors = detail::parallel_for(
            explored.size(), serial_ ? 1 : config_.max_parallel, [&](std::size_t i) {
                ProposalContext ctx{explored[i].first, explored[i].second, history_context};
                RngEngine rng(derive_seed(config_.seed, "optimizer",
                                          static_cast<std::uint64_t>(iteration),
                                          detail::fnv1a64(ctx.seed.id)));
                payloads[i] = optimizer_.propose(ctx, rng);
            });

        std::vector<Candidate> raw;
        for (std::size_t i = 0; i < explored.size(); ++i) {
            if (errors[i]) {
                trace_.append(iteration, TraceKind::proposal,
                              Json{{"parent_id", explored[i].first.id},
                                   {"candidate_id", nullptr},
                                   {"error", detail::exception_text(errors[i])}});
                continue;
            }
            Candidate c;
            c.id = "theta-" + std::to_string(next_candidate_++);
            c.payload = std::move(*payloads[i]);
            c.parent_id = explored[i].first.id;
            c.created_at = iteration;
            c.embedding = embedder_.embed(c.payload);
            trace_.append(iteration, TraceKind::proposal,
                          Json{{"parent_id", explored[i].first.id}, {"candidate_id", c.id}});
            raw.push_back(std::move(c));
        }
        counters_.proposals += raw.size();
        counters_.proposal_steps += 1;
        return raw;
    }

    std::string summarize(std::int64_t iteration) {
        RngEngine rng(derive_seed(config_.seed, "summarizer", static_cast<std::uint64_t>(iteration)));
        SummarizerPrompt prompt = render_summarizer_prompt(memory_, config_.summarizer_threshold, rng);
        std::string digest = summarizer_.summarize(prompt);
        trace_.append(iteration, TraceKind::summary,
                      Json{{"threshold", config_.summarizer_threshold},
                           {"digest_chars", digest.size()},
                           {"digest_hash", detail::fnv1a64(digest)}});
        return digest;
    }

    RunResult run(const Candidate& initial) {
        config_.validate();
        const std::uint64_t bootstrap_cost =
            static_cast<std::uint64_t>(config_.batch_size) * config_.num_batches;
        if (config_.budget_metric_calls < bootstrap_cost)
            throw Error("run: budget_metric_calls (" + std::to_string(config_.budget_metric_calls) +
                        ") cannot cover the initial candidate's evaluation (" +
                        std::to_string(bootstrap_cost) + ")");
        if (dataset_.empty()) throw Error("run: dataset is empty");

        trace_.set_header(Json{{"run_id", "run-" + std::to_string(config_.seed)},
                               {"seed", config_.seed}});

        // Candidate ids are run-scoped and engine-assigned; theta-0 is the seed.
        Candidate theta0 = initial;
        theta0.id = "theta-0";
        theta0.created_at = 0;
        if (!theta0.embedding) theta0.embedding = embedder_.embed(theta0.payload);
        memory_.insert(theta0);

        RngEngine minibatch_rng(derive_seed(config_.seed, "minibatch"));
        const FilterConfig filter_config{config_.epsilon,
                                         memory_.entries().front().candidate.embedding->size()};

        for (std::int64_t iteration = 1;; ++iteration) {
            const std::uint64_t remaining = config_.budget_metric_calls - counters_.metric_calls;
            const std::uint64_t explore_width =
                std::min<std::uint64_t>(effective_k(), memory_.size());
            const std::uint64_t explore_cost =
                explore_width * config_.batch_size * config_.num_batches;
            const std::uint64_t worst_cost = 2 * explore_cost;  // explore + all proposals admitted

            const bool full_iteration = remaining >= worst_cost;
            // The first iteration degrades to evaluating theta_0 alone when a
            // full iteration cannot fit; later iterations are all-or-nothing.
            const bool bootstrap_only = !full_iteration && memory_.total_samples() == 0 &&
                                        remaining >= explore_cost;
            if (!full_iteration && !bootstrap_only) break;

            trace_.append(iteration, TraceKind::iteration_start,
                          Json{{"memory_size", memory_.size()},
                               {"total_samples", memory_.total_samples()},
                               {"remaining_budget", remaining}});

            std::vector<Task> batch;
            for (std::size_t i = 0; i < config_.num_batches; ++i) {
                auto part = sample_minibatch(dataset_, config_.batch_size, minibatch_rng);
                batch.insert(batch.end(), part.begin(), part.end());
            }

            std::vector<Candidate> explore = select_programs(memory_, config_.priority, iteration);
            std::vector<Observation> explore_obs = evaluate(explore, batch, iteration);
            record_observations(explore_obs, iteration, "explore");
            memory_.update_stats(explore_obs);
            append_memory_update(iteration, "explore");

            if (bootstrap_only) break;

            std::string history = summarize(iteration);

            std::vector<std::pair<Candidate, std::vector<Observation>>> explored;
            for (const auto& c : explore) {
                std::vector<Observation> rollouts;
                for (const auto& obs : explore_obs)
                    if (obs.candidate_id == c.id) rollouts.push_back(obs);
                explored.emplace_back(c, std::move(rollouts));
            }
            std::vector<Candidate> raw = propose_programs(explored, history, iteration);

            FilterResult filtered = semantic_filter(raw, memory_, filter_config);
            for (const auto& d : filtered.decisions)
                trace_.append(iteration, TraceKind::filter_decision,
                              Json{{"candidate_id", d.candidate_id},
                                   {"accepted", d.accepted},
                                   {"min_distance", finite_or_tag(d.min_distance)}});

            if (!filtered.accepted.empty()) {
                std::vector<Observation> new_obs = evaluate(filtered.accepted, batch, iteration);
                record_observations(new_obs, iteration, "new");
                for (auto& c : filtered.accepted) memory_.insert(c);
                memory_.update_stats(new_obs);
            } else {
                counters_.evaluation_steps += 1;  // empty round still advances the step axis
            }
            append_memory_update(iteration, "new");
        }

        const Candidate best = memory_.best_candidate();
        const MemoryEntry& best_entry = memory_.entry(best.id);
        trace_.append(last_iteration(), TraceKind::run_end,
                      Json{{"counters", counters_to_json(counters_)},
                           {"best_candidate_id", best.id},
                           {"best_mean", best_entry.mean},
                           {"best_payload", best.payload},
                           {"memory_size", memory_.size()}});
        return RunResult{best, memory_, counters_, std::move(trace_)};
    }

    const Memory& memory() const { return memory_; }
    const MetricCounters& counters() const { return counters_; }
    const TraceLog& trace() const { return trace_; }

private:
    std::uint64_t effective_k() const {
        return config_.priority.kind == PriorityKind::lifo ? 1 : config_.num_candidates;
    }

    void record_observations(const std::vector<Observation>& obs, std::int64_t iteration,
                             const char* phase) {
        for (const auto& o : obs)
            trace_.append(iteration, TraceKind::evaluation,
                          Json{{"candidate_id", o.candidate_id},
                               {"task_id", o.task_id},
                               {"reward", o.reward},
                               {"phase", phase}});
    }

    void append_memory_update(std::int64_t iteration, const char* phase) {
        Json payload{{"phase", phase},
                     {"counters", counters_to_json(counters_)},
                     {"total_samples", memory_.total_samples()},
                     {"memory_size", memory_.size()}};
        bool any = false;
        double best = 0.0;
        for (const auto& e : memory_.entries())
            if (e.sampled() && (!any || e.mean > best)) {
                best = e.mean;
                any = true;
            }
        payload["best_mean"] = any ? Json(best) : Json(nullptr);
        trace_.append(iteration, TraceKind::memory_update, payload);
    }

    std::int64_t last_iteration() const {
        return trace_.events().empty() ? 0 : trace_.events().back().iteration;
    }

    SearchConfig config_;
    Dataset dataset_;
    Guide& guide_;
    Optimizer& optimizer_;
    Embedder& embedder_;
    Summarizer& summarizer_;
    Memory memory_;
    MetricCounters counters_;
    TraceLog trace_;
    std::uint64_t next_candidate_ = 1;
    bool serial_ = false;
};

// Convenience wrapper matching Algorithm 1's signature.
inline Engine::RunResult run_search(const SearchConfig& config, const Dataset& dataset,
                                    const Candidate& initial, Guide& guide, Optimizer& optimizer,
                                    Embedder& embedder, Summarizer& summarizer) {
    Engine engine(config, dataset, guide, optimizer, embedder, summarizer);
    return engine.run(initial);
}

}  // namespace polca
