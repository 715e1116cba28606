#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "polca/rng.hpp"
#include "polca/strategies.hpp"

using namespace polca;

namespace {

Memory memory_with(const std::vector<std::tuple<std::string, std::vector<double>, std::int64_t>>&
                       spec_entries) {
    Memory m;
    for (const auto& [id, rewards, created_at] : spec_entries) {
        Candidate c;
        c.id = id;
        c.payload = id;
        c.created_at = created_at;
        m.insert(c);
        std::vector<Observation> obs;
        for (double r : rewards) {
            Observation o;
            o.candidate_id = id;
            o.task_id = "t";
            o.reward = r;
            o.iteration = 1;
            obs.push_back(o);
        }
        m.update_stats(obs);
    }
    return m;
}

}  // namespace

TEST_CASE("ucb_theory matches an independent evaluation of the score") {
    Memory m = memory_with({{"a", {0.4, 0.6}, 0}});  // mean 0.5, T = 2
    PriorityConfig cfg;
    cfg.kind = PriorityKind::ucb_theory;
    cfg.sigma = 0.5;
    cfg.horizon = 100;

    // Independent route: mu + 2*sigma*sqrt(ln(n)/T) via long double.
    const long double expected =
        0.5L + 2.0L * 0.5L * std::sqrt(std::log(100.0L) / 2.0L);
    const double p = priority(m.entry("a"), m, cfg, 1);
    REQUIRE(p == Catch::Approx(static_cast<double>(expected)).epsilon(1e-9));
    REQUIRE(p == Catch::Approx(2.0174271293851465).epsilon(1e-9));
}

TEST_CASE("priority kinds") {
    PriorityConfig mean_cfg;  // defaults to mean

    SECTION("mean is the empirical mean") {
        Memory m = memory_with({{"a", {1, 0, 1}, 0}});
        REQUIRE(priority(m.entry("a"), m, mean_cfg, 1) == Catch::Approx(2.0 / 3.0));
    }

    SECTION("sigma zero reduces ucb to the mean") {
        Memory m = memory_with({{"a", {0.3, 0.5}, 0}});
        PriorityConfig cfg;
        cfg.kind = PriorityKind::ucb_theory;
        cfg.sigma = 0.0;
        cfg.horizon = 50;
        REQUIRE(priority(m.entry("a"), m, cfg, 1) == Catch::Approx(0.4));
    }

    SECTION("unsampled entries are infinitely urgent under mean and ucb") {
        Memory m = memory_with({{"a", {}, 0}});
        REQUIRE(std::isinf(priority(m.entry("a"), m, mean_cfg, 1)));
        PriorityConfig ucb;
        ucb.kind = PriorityKind::ucb_beta;
        ucb.beta = 1.0;
        REQUIRE(std::isinf(priority(m.entry("a"), m, ucb, 1)));
    }

    SECTION("ucb_beta uses the running total of samples") {
        Memory m = memory_with({{"a", {0.5, 0.5}, 0}, {"b", {0.1, 0.1}, 0}});  // n = 4
        PriorityConfig cfg;
        cfg.kind = PriorityKind::ucb_beta;
        cfg.beta = 1.5;
        const double expected = 0.5 + 1.5 * std::sqrt(std::log(4.0) / 2.0);
        REQUIRE(priority(m.entry("a"), m, cfg, 1) == Catch::Approx(expected));
    }

    SECTION("lifo is the creation timestamp, sampled or not") {
        Memory m = memory_with({{"a", {}, 7}});
        PriorityConfig cfg;
        cfg.kind = PriorityKind::lifo;
        REQUIRE(priority(m.entry("a"), m, cfg, 9) == 7.0);
    }

    SECTION("beam keeps only the current generation") {
        Memory m;
        Candidate old_c, new_c;
        old_c.id = "old";
        old_c.created_at = 1;
        new_c.id = "new";
        new_c.created_at = 2;
        m.insert(old_c);
        m.insert(new_c);
        Observation o1{"old", "t", "", 0.9, "", 1};
        Observation o2{"new", "t", "", 0.4, "", 2};
        Observation o3{"new", "t", "", 0.8, "", 2};
        m.update_stats({o1, o2, o3});
        PriorityConfig cfg;
        cfg.kind = PriorityKind::beam;
        REQUIRE(priority(m.entry("old"), m, cfg, 2) == -std::numeric_limits<double>::infinity());
        REQUIRE(priority(m.entry("new"), m, cfg, 2) == Catch::Approx(0.6));
    }
}

TEST_CASE("ucb dominance: decreasing in T, increasing in n") {
    PriorityConfig cfg;
    cfg.kind = PriorityKind::ucb_theory;
    cfg.sigma = 0.7;
    RngEngine rng(make_rng(11));
    for (int i = 0; i < 100; ++i) {
        const std::uint64_t t = 1 + uniform_index(rng, 50);
        const std::uint64_t n = t + 2 + uniform_index(rng, 1000);
        auto score = [&](std::uint64_t horizon, std::uint64_t samples) {
            Memory m;
            Candidate c;
            c.id = "a";
            m.insert(c);
            std::vector<Observation> obs;
            for (std::uint64_t s = 0; s < samples; ++s)
                obs.push_back(Observation{"a", "t", "", 0.5, "", 1});
            m.update_stats(obs);
            PriorityConfig local = cfg;
            local.horizon = horizon;
            return priority(m.entry("a"), m, local, 1);
        };
        REQUIRE(score(n, t) > score(n, t + 1));
        REQUIRE(score(2 * n, t) > score(n, t));
    }
}

TEST_CASE("select_programs ranks by priority with exploration-friendly ties") {
    SECTION("tie on mean goes to the less-sampled entry") {
        Memory m = memory_with({{"a", {0.9, 0.9, 0.9}, 0}, {"b", {0.5}, 0}, {"c", {0.9}, 1}});
        PriorityConfig cfg;
        cfg.k = 2;
        auto selected = select_programs(m, cfg, 2);
        REQUIRE(selected.size() == 2);
        REQUIRE(selected[0].id == "c");
        REQUIRE(selected[1].id == "a");
    }

    SECTION("an unsampled entry ranks first") {
        Memory m = memory_with({{"a", {0.99}, 0}, {"fresh", {}, 1}});
        PriorityConfig cfg;
        cfg.k = 1;
        REQUIRE(select_programs(m, cfg, 2)[0].id == "fresh");
    }

    SECTION("k larger than memory returns everything") {
        Memory m = memory_with({{"a", {0.1}, 0}, {"b", {0.2}, 0}, {"c", {0.3}, 0}});
        PriorityConfig cfg;
        cfg.k = 10;
        REQUIRE(select_programs(m, cfg, 1).size() == 3);
    }

    SECTION("lifo always selects exactly the newest entry") {
        Memory m = memory_with({{"a", {0.9}, 0}, {"b", {0.1}, 3}, {"c", {0.4}, 2}});
        PriorityConfig cfg;
        cfg.kind = PriorityKind::lifo;
        cfg.k = 5;  // forced down to 1
        auto selected = select_programs(m, cfg, 4);
        REQUIRE(selected.size() == 1);
        REQUIRE(selected[0].id == "b");
    }

    SECTION("selection order is invariant under positive reward rescaling") {
        RngEngine rng(make_rng(21));
        for (int trial = 0; trial < 100; ++trial) {
            const double scale = uniform_range(rng, 0.05, 20.0);
            std::vector<std::tuple<std::string, std::vector<double>, std::int64_t>> plain, scaled;
            const std::size_t n = 2 + uniform_index(rng, 5);
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> rewards;
                for (std::size_t s = 0; s < 1 + uniform_index(rng, 4); ++s)
                    rewards.push_back(uniform01(rng));
                std::vector<double> rescaled = rewards;
                for (auto& r : rescaled) r *= scale;
                plain.emplace_back("c" + std::to_string(i), rewards, static_cast<std::int64_t>(i));
                scaled.emplace_back("c" + std::to_string(i), rescaled,
                                    static_cast<std::int64_t>(i));
            }
            Memory ma = memory_with(plain), mb = memory_with(scaled);
            PriorityConfig cfg;
            cfg.k = 3;
            auto sa = select_programs(ma, cfg, 1), sb = select_programs(mb, cfg, 1);
            REQUIRE(sa.size() == sb.size());
            for (std::size_t i = 0; i < sa.size(); ++i) REQUIRE(sa[i].id == sb[i].id);
        }
    }
}
