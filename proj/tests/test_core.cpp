#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "polca/core.hpp"
#include "polca/rng.hpp"

using namespace polca;

namespace {

Candidate make_candidate(const std::string& id, std::int64_t created_at = 0) {
    Candidate c;
    c.id = id;
    c.payload = "payload of " + id;
    c.created_at = created_at;
    return c;
}

Observation make_obs(const std::string& candidate_id, double reward, std::int64_t iteration = 1) {
    Observation o;
    o.candidate_id = candidate_id;
    o.task_id = "t0";
    o.output = "y";
    o.reward = reward;
    o.feedback = "f";
    o.iteration = iteration;
    return o;
}

void feed(Memory& m, const std::string& id, std::vector<double> rewards) {
    std::vector<Observation> obs;
    for (double r : rewards) obs.push_back(make_obs(id, r));
    m.update_stats(obs);
}

}  // namespace

TEST_CASE("memory insert starts entries unsampled") {
    Memory m;
    m.insert(make_candidate("theta-0"));
    REQUIRE(m.size() == 1);
    REQUIRE(m.total_samples() == 0);
    REQUIRE_FALSE(m.entry("theta-0").sampled());

    m.insert(make_candidate("theta-1"));
    REQUIRE(m.size() == 2);

    REQUIRE_THROWS_WITH(m.insert(make_candidate("theta-0")),
                        Catch::Matchers::ContainsSubstring("duplicate"));
}

TEST_CASE("update_stats maintains the running mean") {
    Memory m;
    m.insert(make_candidate("a"));

    SECTION("mean 0.5 over two samples plus a reward of 1 gives 2/3") {
        feed(m, "a", {0.4, 0.6});
        REQUIRE(m.entry("a").mean == Catch::Approx(0.5));
        feed(m, "a", {1.0});
        REQUIRE(m.entry("a").mean == Catch::Approx(2.0 / 3.0));
        REQUIRE(m.entry("a").sample_count == 3);
    }

    SECTION("first observation of zero yields mean exactly 0") {
        feed(m, "a", {0.0});
        REQUIRE(m.entry("a").sampled());
        REQUIRE(m.entry("a").mean == 0.0);
        REQUIRE(m.entry("a").sample_count == 1);
    }

    SECTION("a batch across two candidates advances total_samples by the batch size") {
        m.insert(make_candidate("b"));
        std::vector<Observation> batch;
        for (int i = 0; i < 3; ++i) batch.push_back(make_obs("a", 0.1 * i));
        for (int i = 0; i < 3; ++i) batch.push_back(make_obs("b", 0.2 * i));
        m.update_stats(batch);
        REQUIRE(m.total_samples() == 6);
    }

    SECTION("unknown candidate is rejected by name") {
        REQUIRE_THROWS_WITH(m.update_stats({make_obs("ghost", 1.0)}),
                            Catch::Matchers::ContainsSubstring("ghost"));
    }

    SECTION("non-finite reward is rejected") {
        REQUIRE_THROWS(m.update_stats({make_obs("a", std::nan(""))}));
    }
}

TEST_CASE("running mean matches the brute-force mean of the full log") {
    // Oracle: sum / count computed over the log in one pass.
    RngEngine rng(make_rng(101));
    for (int trial = 0; trial < 2000; ++trial) {
        Memory m;
        m.insert(make_candidate("a"));
        std::vector<double> all;
        const std::size_t batches = 1 + uniform_index(rng, 5);
        for (std::size_t b = 0; b < batches; ++b) {
            std::vector<Observation> obs;
            const std::size_t count = 1 + uniform_index(rng, 8);
            for (std::size_t i = 0; i < count; ++i) {
                const double r = uniform_range(rng, -10.0, 10.0);
                all.push_back(r);
                obs.push_back(make_obs("a", r));
            }
            m.update_stats(obs);
        }
        double sum = 0.0;
        for (double r : all) sum += r;
        const double brute = sum / static_cast<double>(all.size());
        REQUIRE(m.entry("a").mean ==
                Catch::Approx(brute).epsilon(1e-12).margin(1e-12));
        REQUIRE(m.entry("a").sample_count == all.size());
    }
}

TEST_CASE("total_samples equals the sum of entry counts under interleaving") {
    RngEngine rng(make_rng(77));
    Memory m;
    std::vector<std::string> ids;
    for (int step = 0; step < 300; ++step) {
        if (ids.empty() || uniform01(rng) < 0.25) {
            std::string id = "c" + std::to_string(ids.size());
            m.insert(make_candidate(id));
            ids.push_back(id);
        } else {
            std::vector<Observation> obs;
            const std::size_t count = uniform_index(rng, 4);
            for (std::size_t i = 0; i < count; ++i)
                obs.push_back(make_obs(ids[uniform_index(rng, ids.size())], uniform01(rng)));
            m.update_stats(obs);
        }
        std::uint64_t sum = 0;
        for (const auto& e : m.entries()) sum += e.sample_count;
        REQUIRE(sum == m.total_samples());
    }
}

TEST_CASE("best_candidate picks the highest mean with deterministic tie-breaks") {
    SECTION("plain argmax") {
        Memory m;
        m.insert(make_candidate("a"));
        m.insert(make_candidate("b"));
        feed(m, "a", {0.9, 0.9, 0.9});
        feed(m, "b", {0.5});
        REQUIRE(m.best_candidate().id == "a");
    }

    SECTION("equal means: more samples win") {
        Memory m;
        m.insert(make_candidate("a", 0));
        m.insert(make_candidate("c", 1));
        feed(m, "a", {0.9});
        feed(m, "c", {0.9, 0.9, 0.9, 0.9});
        REQUIRE(m.best_candidate().id == "c");
    }

    SECTION("equal means and counts: earlier created_at wins") {
        Memory m;
        m.insert(make_candidate("late", 5));
        m.insert(make_candidate("early", 2));
        feed(m, "late", {0.7});
        feed(m, "early", {0.7});
        REQUIRE(m.best_candidate().id == "early");
    }

    SECTION("no sampled entries is an error") {
        Memory m;
        m.insert(make_candidate("a"));
        REQUIRE_THROWS(m.best_candidate());
    }

    SECTION("argmax is invariant under positive reward rescaling") {
        RngEngine rng(make_rng(5));
        for (int trial = 0; trial < 200; ++trial) {
            Memory plain, scaled;
            const double scale = uniform_range(rng, 0.01, 50.0);
            const std::size_t n = 2 + uniform_index(rng, 5);
            for (std::size_t i = 0; i < n; ++i) {
                const std::string id = "c" + std::to_string(i);
                plain.insert(make_candidate(id, static_cast<std::int64_t>(i)));
                scaled.insert(make_candidate(id, static_cast<std::int64_t>(i)));
                const std::size_t count = 1 + uniform_index(rng, 4);
                std::vector<double> rewards;
                for (std::size_t s = 0; s < count; ++s) rewards.push_back(uniform01(rng));
                feed(plain, id, rewards);
                for (auto& r : rewards) r *= scale;
                feed(scaled, id, rewards);
            }
            REQUIRE(plain.best_candidate().id == scaled.best_candidate().id);
        }
    }
}

TEST_CASE("memory snapshots round-trip through JSON") {
    RngEngine rng(make_rng(9));
    Memory m;
    for (int i = 0; i < 6; ++i) {
        Candidate c = make_candidate("c" + std::to_string(i), i);
        c.embedding = Embedding{uniform01(rng), uniform01(rng), uniform01(rng)};
        if (i > 0) c.parent_id = "c" + std::to_string(i - 1);
        m.insert(c);
        std::vector<Observation> obs;
        for (std::size_t s = 0; s < uniform_index(rng, 5); ++s)
            obs.push_back(make_obs(c.id, uniform_range(rng, -2.0, 2.0), i));
        m.update_stats(obs);
    }

    const Json snapshot = m.to_json("run-9");
    const Memory restored = Memory::from_json(snapshot);

    REQUIRE(restored.size() == m.size());
    REQUIRE(restored.total_samples() == m.total_samples());
    for (std::size_t i = 0; i < m.entries().size(); ++i) {
        const MemoryEntry& a = m.entries()[i];
        const MemoryEntry& b = restored.entries()[i];
        REQUIRE(a.candidate.id == b.candidate.id);
        REQUIRE(a.candidate.payload == b.candidate.payload);
        REQUIRE(a.candidate.embedding == b.candidate.embedding);
        REQUIRE(a.candidate.parent_id == b.candidate.parent_id);
        REQUIRE(a.candidate.created_at == b.candidate.created_at);
        REQUIRE(a.sample_count == b.sample_count);
        REQUIRE(a.mean == b.mean);  // bitwise: same update sequence replayed
        REQUIRE(a.insertion_index == b.insertion_index);
        REQUIRE(a.observations.size() == b.observations.size());
        for (std::size_t o = 0; o < a.observations.size(); ++o) {
            REQUIRE(a.observations[o].reward == b.observations[o].reward);
            REQUIRE(a.observations[o].task_id == b.observations[o].task_id);
            REQUIRE(a.observations[o].iteration == b.observations[o].iteration);
        }
    }
    // Re-serialization is identical text.
    REQUIRE(restored.to_json("run-9").dump() == snapshot.dump());
}
